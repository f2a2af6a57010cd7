#![allow(clippy::neg_cmp_op_on_partial_ord)]
use casimir_grating::calibration::{
    calibrate, error_budget, extract_casimir, synth_generate, CalibrationOptions, ErrorBudgetOptions,
    SynthSpec, SynthTruth,
};
use casimir_grating::corrugation::{
    comparison_report, force_curve, CellQuadrature, ForceCurve, Method,
};
use casimir_grating::electrostatics::validate_perturbative;
use casimir_grating::io::{self, fmt, ForceInterpolant, RunConfig};
use casimir_grating::laplace::GridSpec;
use casimir_grating::material::MaterialModel;
use casimir_grating::table::{PlateFunctionTable, PlateSamples, TableOptions};
use casimir_grating::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "casimir-grating", version, about = "Casimir force between crossed corrugations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sphere–plate force curves per crossing angle and method.
    Force(Common),
    /// Calibrate a deflection dataset and extract the Casimir force.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// manifest overriding the one in the config
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare the perturbative electrostatic energy with a field solve.
    ValidateElectrostatics(Common),
    /// Generate a synthetic deflection dataset.
    Synth(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Data(_) | Error::Io(_) | Error::Alignment(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Force(c) | Command::ValidateElectrostatics(c) | Command::Synth(c) => c,
        Command::Calibrate { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let res = (|| -> Result<()> {
        let cfg = io::load_run_config(&common.config)?;
        std::fs::create_dir_all(&common.out)?;
        match &cli.command {
            Command::Force(c) => cmd_force(&cfg, &c.out),
            Command::Calibrate { common, dataset } => cmd_calibrate(&cfg, &common.out, dataset.as_deref()),
            Command::ValidateElectrostatics(c) => cmd_validate_electrostatics(&cfg, &c.out),
            Command::Synth(c) => cmd_synth(&cfg, &c.out, c.seed.or(cfg.seed).unwrap_or(0)),
        }
    })();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn material(cfg: &RunConfig) -> Result<MaterialModel> {
    let p = cfg
        .material
        .as_ref()
        .ok_or_else(|| Error::config("material", "a material file is required"))?;
    io::load_material(p)
}

fn table_for(
    model: &MaterialModel,
    t: f64,
    range: (f64, f64),
    opts: &TableOptions,
    cache: Option<&Path>,
    tag: &str,
) -> Result<PlateFunctionTable> {
    let file = cache.map(|d| d.join(format!("table_{tag}.json")));
    if let Some(f) = file.as_ref().filter(|f| f.exists()) {
        let s: PlateSamples = serde_json::from_str(&std::fs::read_to_string(f)?)
            .map_err(|e| Error::Data(format!("{}: {e}", f.display())))?;
        let tab = PlateFunctionTable::from_samples(s)?;
        let (a, b) = tab.range();
        if a <= range.0 && b >= range.1 && tab.samples().h.len() == opts.nodes {
            log::info!("reusing plate-function table {}", f.display());
            return Ok(tab);
        }
    }
    log::info!(
        "building plate-function table `{tag}` over [{:.1}, {:.1}] nm with {} nodes",
        range.0 * 1e9,
        range.1 * 1e9,
        opts.nodes
    );
    let tab = PlateFunctionTable::build(model, t, range.0, range.1, opts)?;
    if let Some(f) = file {
        std::fs::create_dir_all(f.parent().unwrap_or(Path::new(".")))?;
        io::write_json(&f, tab.samples())?;
    }
    Ok(tab)
}

fn cmd_force(cfg: &RunConfig, out: &Path) -> Result<()> {
    let fs = cfg
        .force
        .as_ref()
        .ok_or_else(|| Error::config("force", "section missing"))?;
    let model = material(cfg)?;
    let geom = io::load_geometry(&cfg.geometry)?;
    let methods = fs
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    let zs = io_grid(fs.z_min_nm, fs.z_max_nm, fs.z_step_nm);
    let pad = geom.amplitude_plate + geom.amplitude_sphere + 2e-9;
    let range = (zs[0] - pad, zs[zs.len() - 1] + pad);
    let mut topts = TableOptions::default();
    if let Some(n) = fs.table_nodes {
        topts.nodes = n;
    }
    let mut quad = CellQuadrature::default();
    if let Some(n) = fs.x_nodes {
        quad.x_nodes = n;
    }
    if let Some(n) = fs.y_nodes_per_beat {
        quad.y_nodes_per_beat = n;
    }
    let t = cfg.temperature_K;
    let cache = fs.table_cache_dir.as_deref();
    let mut tables: BTreeMap<&str, PlateFunctionTable> = BTreeMap::new();
    let need = |m: Method| methods.contains(&m);
    if need(Method::Der) || need(Method::Pfa) || need(Method::DerT0) {
        tables.insert("finite_t", table_for(&model, t, range, &topts, cache, &format!("T{t}"))?);
    }
    if need(Method::DerT0) {
        tables.insert("zero_t", table_for(&model, 0.0, range, &topts, cache, "T0")?);
    }
    if need(Method::DerIdeal) {
        let tag = format!("ideal_T{t}");
        tables.insert("ideal", table_for(&MaterialModel::IdealMetal, t, range, &topts, cache, &tag)?);
    }

    let mut curves: Vec<ForceCurve> = Vec::new();
    let mut ideal_pfa: Vec<ForceCurve> = Vec::new();
    for &th in &fs.theta_deg {
        let g = geom.with_theta(th.to_radians());
        for &m in &methods {
            let tab = match m {
                Method::Der | Method::Pfa => &tables["finite_t"],
                Method::DerT0 => &tables["zero_t"],
                Method::DerIdeal => &tables["ideal"],
            };
            let res = force_curve(&g, tab, &zs, m, fs.extent, &quad);
            for (z, e) in &res.failures {
                log::error!("{} at θ = {th}°, z = {:.1} nm: {e}", m.tag(), z * 1e9);
            }
            if !res.failures.is_empty() {
                return Err(res.failures.into_iter().next().unwrap().1);
            }
            curves.push(res.curve);
        }
        if need(Method::DerIdeal) {
            let res = force_curve(&g, &tables["ideal"], &zs, Method::Pfa, fs.extent, &quad);
            if let Some((_, e)) = res.failures.into_iter().next() {
                return Err(e);
            }
            ideal_pfa.push(res.curve);
        }
    }
    io::write_force_csv(&out.join("forces.csv"), &curves)?;

    // comparison tables and headline numbers
    let find = |m: Method, th: f64| {
        curves
            .iter()
            .find(|c| c.method == m && (c.theta - th.to_radians()).abs() < 1e-12)
    };
    let mut w = csv::Writer::from_path(out.join("comparison.csv")).map_err(io_csv)?;
    w.write_record(["z_nm", "theta_deg", "variant", "ratio", "difference_pN"])
        .map_err(io_csv)?;
    let mut summary = Vec::new();
    for (i, &th) in fs.theta_deg.iter().enumerate() {
        let mut pairs: Vec<(&str, &ForceCurve, &ForceCurve)> = Vec::new();
        if let Some(p) = find(Method::Pfa, th) {
            for (m, name) in [(Method::Der, "DER/PFA"), (Method::DerT0, "DER_T0/PFA")] {
                if let Some(c) = find(m, th) {
                    pairs.push((name, c, p));
                }
            }
        }
        if let (Some(c), Some(p)) = (find(Method::DerIdeal, th), ideal_pfa.get(i)) {
            pairs.push(("DER_IDEAL/PFA_IDEAL", c, p));
        }
        for (name, c, p) in &pairs {
            for row in comparison_report(c, p)? {
                w.write_record([
                    io::fmt_nm(row.z),
                    fmt(th),
                    name.to_string(),
                    fmt(row.ratio),
                    fmt(-row.difference * 1e12),
                ])
                .map_err(io_csv)?;
            }
        }
        let at = |c: Option<&ForceCurve>, z_nm: f64| {
            c.and_then(|c| {
                c.points
                    .iter()
                    .find(|(z, _)| (z * 1e9 - z_nm).abs() < 1e-6)
                    .map(|(_, f)| -f * 1e12)
            })
        };
        let der = find(Method::Der, th);
        let pfa = find(Method::Pfa, th);
        let dev127 = match (at(der, 127.0), at(pfa, 127.0)) {
            (Some(a), Some(b)) => Some(100.0 * (a - b) / b),
            _ => None,
        };
        let diff130 = match (at(der, 130.0), at(pfa, 130.0)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        summary.push(json!({
            "theta_deg": th,
            "F_DER_130nm_pN": at(der, 130.0),
            "F_DER_150nm_pN": at(der, 150.0),
            "PFA_deviation_127nm_percent": dev127,
            "DER_minus_PFA_130nm_pN": diff130,
        }));
    }
    w.flush()?;
    io::write_json(
        &out.join("summary.json"),
        &json!({
            "temperature_K": cfg.temperature_K,
            "convention": topts.convention,
            "angles": summary,
        }),
    )?;
    Ok(())
}

fn io_grid(lo_nm: f64, hi_nm: f64, step_nm: f64) -> Vec<f64> {
    let n = ((hi_nm - lo_nm) / step_nm + 1e-9).floor() as usize + 1;
    (0..n).map(|i| (lo_nm + step_nm * i as f64) * 1e-9).collect()
}

fn io_csv(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn cmd_calibrate(cfg: &RunConfig, out: &Path, dataset: Option<&Path>) -> Result<()> {
    let cs = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| Error::config("calibrate", "section missing"))?;
    let geom = io::load_geometry(&cfg.geometry)?;
    let data = io::load_dataset(dataset.unwrap_or(&cs.dataset))?;
    let mut opts = CalibrationOptions::default();
    if let Some(e) = &cs.endpoints_nm {
        opts.endpoints = e.iter().map(|v| v * 1e-9).collect();
    }
    if let Some(d) = cs.drift_start_um {
        opts.drift_start = d * 1e-6;
    }
    if let Some(c) = cs.confidence {
        opts.confidence = c;
    }
    let run = calibrate(&data, &geom, &opts)?;
    let r = &run.result;
    let measured = extract_casimir(&run.prepared, r, &geom)?;
    let mut bopts = ErrorBudgetOptions {
        confidence: opts.confidence,
        ..Default::default()
    };
    if let Some(f) = cs.instrument_floor_pN {
        bopts.instrument_floor = f * 1e-12;
    }
    let budget = error_budget(&measured, r, &run.prepared, &geom, &bopts)?;
    let t = r.confidence_factor;
    let s_unit = io::sigma_to_pn_per_mv(1.0);
    io::write_json(
        &out.join("calibration.json"),
        &json!({
            "theta_deg": geom.theta.to_degrees(),
            "confidence": r.confidence,
            "student_factor": t,
            "V0_mV": r.v0.value * 1e3,
            "V0_err_mV": r.v0.half_width(t) * 1e3,
            "z0_nm": r.z0.value * 1e9,
            "z0_err_nm": r.z0.half_width(t) * 1e9,
            "sigma_pN_per_mV": r.sigma.value * s_unit,
            "sigma_err_pN_per_mV": r.sigma.half_width(t) * s_unit,
            "sigma_z0_correlation": r.fit.correlation,
            "beta_fit_chi2": r.fit.chi2,
            "beta_fit_dof": r.fit.dof,
            "V0_slope_mV_per_nm": r.v0_slope.value * 1e3 * 1e-9,
            "V0_slope_err_mV_per_nm": r.v0_slope.std_error * 1e3 * 1e-9,
            "V0_depends_on_z": r.v0_flag,
            "endpoint_scan_not_constant": r.endpoint_flag,
            "random_error_depends_on_z": budget.random_flag,
            "dof": budget.dof,
        }),
    )?;
    let mut w = csv::Writer::from_path(out.join("v0_series.csv")).map_err(io_csv)?;
    w.write_record(["z_rel_nm", "V0_mV", "V0_err_mV"]).map_err(io_csv)?;
    for p in &r.v0_series {
        w.write_record([io::fmt_nm(p.z_rel), fmt(p.v0.value * 1e3), fmt(p.v0.std_error * 1e3)])
            .map_err(io_csv)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("beta_series.csv")).map_err(io_csv)?;
    w.write_record(["z_rel_nm", "beta_per_V", "beta_err_per_V"]).map_err(io_csv)?;
    for b in &r.beta_series {
        w.write_record([io::fmt_nm(b.z_rel), fmt(b.beta), fmt(b.sigma)]).map_err(io_csv)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("endpoint_scan.csv")).map_err(io_csv)?;
    w.write_record([
        "z_end_nm",
        "sigma_pN_per_mV",
        "sigma_err_pN_per_mV",
        "z0_nm",
        "z0_err_nm",
        "status",
    ])
    .map_err(io_csv)?;
    for e in &r.endpoint_scan {
        match &e.fit {
            Ok(f) => w.write_record([
                io::fmt_nm(e.z_end),
                fmt(f.sigma.value * s_unit),
                fmt(f.sigma.half_width(t) * s_unit),
                fmt(f.z0.value * 1e9),
                fmt(f.z0.half_width(t) * 1e9),
                "ok".to_string(),
            ]),
            Err(err) => w.write_record([
                io::fmt_nm(e.z_end),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                err.to_string(),
            ]),
        }
        .map_err(io_csv)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("casimir.csv")).map_err(io_csv)?;
    w.write_record(["z_nm", "F_pN", "random_pN", "systematic_pN", "total_pN"])
        .map_err(io_csv)?;
    for k in 0..measured.z.len() {
        w.write_record([
            io::fmt_nm(measured.z[k]),
            fmt(measured.mean[k] * 1e12),
            fmt(budget.random[k] * 1e12),
            fmt(budget.systematic[k] * 1e12),
            fmt(budget.total[k] * 1e12),
        ])
        .map_err(io_csv)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_validate_electrostatics(cfg: &RunConfig, out: &Path) -> Result<()> {
    let es = cfg
        .electrostatics
        .as_ref()
        .ok_or_else(|| Error::config("electrostatics", "section missing"))?;
    let geom = io::load_geometry(&cfg.geometry)?;
    let mut grid = GridSpec::default();
    if let Some(n) = es.nx {
        grid.nx = n;
    }
    if let Some(n) = es.ny {
        grid.ny = n;
    }
    let zs: Vec<f64> = es.z_nm.iter().map(|z| z * 1e-9).collect();
    let rep = validate_perturbative(&geom, &zs, grid)?;
    let mut w = csv::Writer::from_path(out.join("electrostatics.csv")).map_err(io_csv)?;
    w.write_record(["z_nm", "E_perturbative_J_m2", "E_laplace_J_m2", "rel_dev"])
        .map_err(io_csv)?;
    for r in &rep.rows {
        w.write_record([io::fmt_nm(r.z), fmt(r.perturbative), fmt(r.laplace), fmt(r.rel_dev)])
            .map_err(io_csv)?;
    }
    w.flush()?;
    let tol = es.tolerance.unwrap_or(0.01);
    log::info!("maximum relative deviation {:.4}%", 100.0 * rep.max_rel_dev);
    if rep.max_rel_dev > tol {
        return Err(Error::Accuracy(format!(
            "maximum relative deviation {:.3e} exceeds {:.3e}",
            rep.max_rel_dev, tol
        )));
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: &Path, seed: u64) -> Result<()> {
    let ss = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::config("synth", "section missing"))?;
    let geom = io::load_geometry(&cfg.geometry)?;
    let bytes = std::fs::read(&ss.theory_csv)
        .map_err(|e| Error::Data(format!("{}: {e}", ss.theory_csv.display())))?;
    let method: Method = ss.theory_method.parse()?;
    let th = ss.theory_theta_deg.to_radians();
    let curve = io::read_force_csv(&bytes)?
        .into_iter()
        .find(|c| c.method == method && (c.theta - th).abs() < 1e-9)
        .ok_or_else(|| {
            Error::Data(format!(
                "{} has no {} curve at {}°",
                ss.theory_csv.display(),
                ss.theory_method,
                ss.theory_theta_deg
            ))
        })?;
    let theory = ForceInterpolant::new(&curve)?;
    let truth = SynthTruth {
        sigma: io::sigma_from_pn_per_mv(ss.sigma_pN_per_mV),
        z0: ss.z0_nm * 1e-9,
        v0: ss.v0_mV * 1e-3,
        m: ss.m_nm_per_unit * 1e-9,
    };
    let spec = SynthSpec {
        voltages: ss.voltages_mV.iter().map(|v| v * 1e-3).collect(),
        repetitions: ss.repetitions,
        z_piezo_max: ss.z_piezo_max_um * 1e-6,
        raw_step: ss.raw_step_nm * 1e-9,
        grid_step: 1e-9,
        noise: ss.noise,
        drift_slope: ss.drift_per_um / 1e-6,
        drift_offset: ss.drift_offset,
        m_err: ss.m_err_nm_per_unit * 1e-9,
    };
    let f = |z: f64| theory.eval(z);
    let data = synth_generate(&f, &truth, &geom, &spec, seed)?;
    let dir = out.join("dataset");
    let man = io::write_dataset(&dir, &data)?;
    log::info!("wrote {} curves, manifest {}", data.curves.len(), man.display());
    Ok(())
}

