//! One PASS/FAIL line per acceptance criterion. Exits non-zero when a
//! criterion fails that is not listed in `KNOWN_UNMET`.

mod common;

use casimir_grating::calibration::*;
use casimir_grating::corrugation::*;
use casimir_grating::electrostatics::{validate_perturbative, x_of_z};
use casimir_grating::io::{sigma_from_pn_per_mv, ForceInterpolant};
use casimir_grating::kernel::{alpha, Assembly, Denominator, KernelConvention, KernelOptions};
use casimir_grating::laplace::GridSpec;
use casimir_grating::lifshitz::*;
use casimir_grating::material::{MaterialModel, PhysicalConstants};
use casimir_grating::table::{PlateFunctionTable, TableOptions};
use common::{experiment, gold, rel};
use std::f64::consts::PI;
use std::time::Instant;

/// Criteria this implementation does not meet; see the notes in the README.
const KNOWN_UNMET: &[&str] = &["A5", "A10"];

const ANGLES: [f64; 4] = [0.0, 1.2, 1.8, 2.4];
const H_MIN: f64 = 40e-9;
const H_MAX: f64 = 460e-9;
const NODES: usize = 56;
const MC_RUNS: usize = 100;
/// per-point signal noise; sets the random error of the 110-curve mean near 0.48 pN
const NOISE: f64 = 4.7e-3;

struct Report {
    rows: Vec<(String, bool)>,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String, t: Instant) {
        println!(
            "{id:<4} {}  {detail}  [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        self.rows.push((id.to_string(), pass));
    }
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

fn table(conv: KernelConvention) -> PlateFunctionTable {
    let o = TableOptions { nodes: NODES, convention: conv, ..Default::default() };
    PlateFunctionTable::build(&gold(), 300.0, H_MIN, H_MAX, &o).unwrap()
}

fn force_pn(t: &PlateFunctionTable, g: &CorrugationGeometry, z: f64, m: Method) -> f64 {
    -force_sphere(g, t, z, m, PlateExtent::Finite, &CellQuadrature::default()).unwrap() * 1e12
}

fn fmt_list(v: &[f64], prec: usize) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.prec$}")).collect();
    format!("[{}]", s.join(", "))
}

/// PFA deviation at 127 nm (%) and F^Der − F^PFA at 130 nm (pN) per angle.
fn pfa_numbers(t: &PlateFunctionTable) -> (Vec<f64>, Vec<f64>) {
    let mut dev = Vec::new();
    let mut diff = Vec::new();
    for a in ANGLES {
        let g = experiment().with_theta(deg(a));
        let (d, p) = (force_pn(t, &g, 127e-9, Method::Der), force_pn(t, &g, 127e-9, Method::Pfa));
        dev.push(100.0 * (d - p) / p);
        diff.push(force_pn(t, &g, 130e-9, Method::Der) - force_pn(t, &g, 130e-9, Method::Pfa));
    }
    (dev, diff)
}

const A4_TARGET: [f64; 4] = [7.7, 4.7, 2.3, 1.8];
const A5_TARGET: [f64; 4] = [5.9, 4.2, 2.1, 0.98];

fn a4_ok(dev: &[f64]) -> bool {
    let within = dev.iter().zip(A4_TARGET).all(|(d, t)| (d - t).abs() <= 1.5);
    within && dev.windows(2).all(|w| w[1] < w[0])
}

fn a5_hits(diff: &[f64]) -> usize {
    diff.iter().zip(A5_TARGET).filter(|(d, t)| (*d - t).abs() <= 0.2 * t).count()
}

fn main() {
    let mut r = Report { rows: Vec::new() };
    let total = Instant::now();

    // A1
    let t = Instant::now();
    let g0 = experiment();
    let sigma = sigma_from_pn_per_mv(1.35);
    let zs = [145e-9, 155e-9, 265e-9, 500e-9];
    let want = [14.86, 13.86, 8.06, 4.26];
    let beta: Vec<f64> = zs.iter().map(|&z| x_of_z(&g0, z).unwrap() / sigma).collect();
    let ok = beta.iter().zip(want).all(|(b, w)| rel(*b, w) <= 0.03);
    r.line("A1", ok, format!("beta = {} V^-2, target {} within 3%", fmt_list(&beta, 2), fmt_list(&want, 2)), t);

    // A2
    let t = Instant::now();
    let grid: Vec<f64> = (0..7).map(|i| (160.0 + 40.0 * i as f64) * 1e-9).collect();
    let rep = validate_perturbative(&g0, &grid, GridSpec { nx: 64, ny: 40 }).unwrap();
    r.line(
        "A2",
        rep.max_rel_dev < 0.01,
        format!("max |perturbative/field - 1| = {:.3}% over 160-400 nm, limit 1%", 100.0 * rep.max_rel_dev),
        t,
    );

    // shared Au table, checked against direct evaluation off the nodes
    let t = Instant::now();
    let au = table(KernelConvention::default());
    let o = TableOptions::default();
    let mut worst: f64 = 0.0;
    for h in [61.7e-9, 133.3e-9, 287.9e-9] {
        let v = au.values(h).unwrap();
        worst = worst
            .max(rel(v.u, plate_energy_with(&gold(), 300.0, h, &o.lifshitz).unwrap()))
            .max(rel(v.du, plate_energy_derivative_with(&gold(), 300.0, h, &o.lifshitz).unwrap()))
            .max(rel(v.alpha, alpha(&gold(), 300.0, h, o.convention, &o.kernel).unwrap().alpha));
    }
    println!("     Au table: {NODES} nodes over 40-460 nm, worst off-node error {worst:.1e}  [{:.1} s]", t.elapsed().as_secs_f64());
    assert!(worst < 1e-4);

    // A3
    let t = Instant::now();
    let ratio = |z: f64| {
        force_pn(&au, &experiment().with_theta(deg(2.4)), z, Method::Der) / force_pn(&au, &g0, z, Method::Der)
    };
    let (r130, r150) = (ratio(130e-9), ratio(150e-9));
    let f130: Vec<f64> = ANGLES.iter().map(|&a| force_pn(&au, &experiment().with_theta(deg(a)), 130e-9, Method::Der)).collect();
    r.line(
        "A3",
        (r130 - 1.15).abs() <= 0.03 && (r150 - 1.11).abs() <= 0.03,
        format!("F(2.4)/F(0) = {r130:.3} at 130 nm (1.15 +- 0.03), {r150:.3} at 150 nm (1.11 +- 0.03); F_DER(130 nm) = {} pN", fmt_list(&f130, 2)),
        t,
    );

    // A4, A5
    let t = Instant::now();
    let (dev, diff) = pfa_numbers(&au);
    r.line("A4", a4_ok(&dev), format!("PFA deviation at 127 nm = {}%, target {} +- 1.5 points, decreasing", fmt_list(&dev, 2), fmt_list(&A4_TARGET, 1)), t);
    let hits = a5_hits(&diff);
    r.line("A5", hits == 4, format!("F_DER - F_PFA at 130 nm = {} pN, target {} +- 20% ({hits}/4 within)", fmt_list(&diff, 2), fmt_list(&A5_TARGET, 2)), t);

    // A6
    let t = Instant::now();
    let mut change = Vec::new();
    for a in ANGLES {
        let g = experiment().with_theta(deg(a));
        let f = force_pn(&au, &g, 100e-9, Method::Der);
        let worst = [0.5e-6, -0.5e-6]
            .iter()
            .map(|d| (force_pn(&au, &CorrugationGeometry { ly: g.ly + d, ..g }, 100e-9, Method::Der) - f).abs())
            .fold(0.0, f64::max);
        change.push(100.0 * worst / f);
    }
    let a6_target = [0.0, 1.0, 1.6, 1.5];
    let ok = change.iter().zip(a6_target).all(|(c, w)| (c - w).abs() <= 0.5);
    r.line("A6", ok, format!("max |dF|/F for Ly +- 0.5 um at 100 nm = {}%, target {} +- 0.5 points", fmt_list(&change, 2), fmt_list(&a6_target, 1)), t);

    // A7
    let t = Instant::now();
    let plus = table(KernelConvention { denominator: Denominator::Plus, assembly: Assembly::AsPrinted });
    let (dev_p, diff_p) = pfa_numbers(&plus);
    let (dev_e, _) = pfa_numbers(&au.with_flipped_assembly().unwrap());
    let (ok_m, ok_p) = (a4_ok(&dev), a4_ok(&dev_p));
    let (hits_m, hits_p) = (hits, a5_hits(&diff_p));
    let ok = ok_m && !ok_p && hits_m >= hits_p;
    r.line(
        "A7",
        ok,
        format!(
            "minus denominator: A4 {}, A5 {hits_m}/4; plus denominator: A4 {} (deviation {}%), A5 {hits_p}/4 ({} pN); energy-normalised minus: deviation {}%",
            if ok_m { "pass" } else { "fail" },
            if ok_p { "pass" } else { "fail" },
            fmt_list(&dev_p, 2),
            fmt_list(&diff_p, 2),
            fmt_list(&dev_e, 2),
        ),
        t,
    );

    // A8
    let t = Instant::now();
    let hbar_c = PhysicalConstants::HBAR * PhysicalConstants::C;
    let mut err: f64 = 0.0;
    for h in [100e-9f64, 200e-9, 400e-9] {
        let exact = -PI.powi(2) * hbar_c / (720.0 * h.powi(3));
        err = err.max(rel(plate_energy_t0(&MaterialModel::IdealMetal, h).unwrap(), exact));
    }
    let ideal = PlateFunctionTable::build(&MaterialModel::IdealMetal, 0.0, 60e-9, 300e-9, &TableOptions { nodes: 24, ..Default::default() }).unwrap();
    let flat = CorrugationGeometry { amplitude_plate: 0.0, amplitude_sphere: 0.0, ..experiment() };
    let mut ferr: f64 = 0.0;
    for z in [130e-9f64, 200e-9] {
        let f = force_sphere(&flat, &ideal, z, Method::DerT0, PlateExtent::Finite, &CellQuadrature::default()).unwrap();
        ferr = ferr.max(rel(f, -2.0 * PI * flat.radius * PI.powi(2) * hbar_c / (720.0 * z.powi(3))));
    }
    let kopt = KernelOptions::default();
    let conv = KernelConvention::default();
    let mut scal: f64 = 0.0;
    for h in [120e-9, 250e-9] {
        let m = MaterialModel::IdealMetal;
        scal = scal
            .max(rel(plate_energy_t0(&m, 2.0 * h).unwrap() * 8.0, plate_energy_t0(&m, h).unwrap()))
            .max(rel(plate_energy_derivative_t0(&m, 2.0 * h).unwrap() * 16.0, plate_energy_derivative_t0(&m, h).unwrap()))
            .max(rel(alpha(&m, 0.0, 2.0 * h, conv, &kopt).unwrap().alpha * 8.0, alpha(&m, 0.0, h, conv, &kopt).unwrap().alpha));
    }
    let (vac, pec) = (MaterialModel::Constant(1.0), MaterialModel::IdealMetal);
    let zero = [
        plate_energy(&vac, 300.0, 150e-9).unwrap() / plate_energy(&pec, 300.0, 150e-9).unwrap(),
        plate_energy_derivative(&vac, 300.0, 150e-9).unwrap() / plate_energy_derivative(&pec, 300.0, 150e-9).unwrap(),
        alpha(&vac, 300.0, 150e-9, conv, &kopt).unwrap().alpha / alpha(&pec, 300.0, 150e-9, conv, &kopt).unwrap().alpha,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    r.line(
        "A8",
        err < 1e-3 && ferr < 1e-3 && scal < 5e-3 && zero < 1e-12,
        format!("ideal-metal U {err:.1e}, sphere force {ferr:.1e} (limit 1e-3); H^-3 scaling of U, U', alpha {scal:.1e} (limit 5e-3); eps = 1 relative to ideal metal {zero:.0e}"),
        t,
    );

    // A9
    let t = Instant::now();
    let e: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&a| energy_pfa(&experiment().with_theta(deg(a)), &au, 130e-9, PlateExtent::Infinite, &CellQuadrature::default()).unwrap())
        .collect();
    let spread = e.iter().map(|v| rel(*v, e[0])).fold(0.0, f64::max);
    // independent route: a very wide finite plate tends to the unit-cell value
    let wide = [0.5, 1.0, 2.0]
        .iter()
        .zip(&e)
        .map(|(&a, inf)| {
            let g = CorrugationGeometry { ly: 20e-3, ..experiment().with_theta(deg(a)) };
            rel(energy_pfa(&g, &au, 130e-9, PlateExtent::Finite, &CellQuadrature::default()).unwrap(), *inf)
        })
        .fold(0.0, f64::max);
    r.line(
        "A9",
        spread < 1e-3 && wide < 1e-3,
        format!("infinite-plate PFA energy spread over 0.5, 1, 2 deg = {spread:.1e}; 20 mm finite plate vs unit cell {wide:.1e}; limit 1e-3"),
        t,
    );

    // A10
    let t = Instant::now();
    let zs: Vec<f64> = (0..31).map(|i| (100.0 + 10.0 * i as f64) * 1e-9).collect();
    let curve = force_curve(&g0, &au, &zs, Method::Der, PlateExtent::Finite, &CellQuadrature::default());
    assert!(curve.failures.is_empty());
    let interp = ForceInterpolant::new(&curve.curve).unwrap();
    let casimir = |z: f64| interp.eval(z);
    let truth = SynthTruth { sigma, z0: 126.2e-9, v0: -90.2e-3, m: 102.1e-9 };
    let spec = SynthSpec {
        drift_slope: 2000.0,
        drift_offset: 0.01,
        m_err: 1e-9,
        ..SynthSpec::eleven_voltages(NOISE)
    };
    let mut cover = [0usize; 3];
    let mut random = Vec::new();
    let mut tot_short = Vec::new();
    let mut tot_long = Vec::new();
    let mut failed = 0;
    for seed in 0..MC_RUNS as u64 {
        let run = synth_generate(&casimir, &truth, &g0, &spec, 1000 + seed)
            .and_then(|d| calibrate(&d, &g0, &CalibrationOptions::default()));
        let Ok(run) = run else {
            failed += 1;
            continue;
        };
        let res = &run.result;
        let k = res.confidence_factor;
        cover[0] += res.v0.covers(truth.v0, k) as usize;
        cover[1] += res.z0.covers(truth.z0, k) as usize;
        cover[2] += res.sigma.covers(truth.sigma, k) as usize;
        let m = extract_casimir(&run.prepared, res, &g0).unwrap();
        let b = error_budget(&m, res, &run.prepared, &g0, &ErrorBudgetOptions::default()).unwrap();
        let at = |z: f64| b.z.iter().position(|zz| *zz >= z).unwrap();
        random.push(b.random.iter().sum::<f64>() / b.random.len() as f64 * 1e12);
        tot_short.push(b.total[at(130e-9)] * 1e12);
        tot_long.push(b.total[at(300e-9)] * 1e12);
    }
    let n = (MC_RUNS - failed) as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cov: Vec<f64> = cover.iter().map(|c| *c as f64 / n).collect();
    let (rnd, ts, tl) = (mean(&random), mean(&tot_short), mean(&tot_long));
    let ok = failed == 0
        && cov.iter().all(|c| *c >= 0.67)
        && (0.45..=0.51).contains(&rnd)
        && (0.73..=0.88).contains(&ts)
        && (0.73..=0.88).contains(&tl);
    r.line(
        "A10",
        ok,
        format!(
            "{MC_RUNS} runs ({failed} failed): coverage V0/z0/sigma = {}; random {rnd:.3} pN (0.45-0.51); total {ts:.2} pN at 130 nm, {tl:.2} pN at 300 nm (0.73-0.88)",
            fmt_list(&cov, 2)
        ),
        t,
    );

    let unexpected: Vec<&str> = r
        .rows
        .iter()
        .filter(|(id, pass)| !pass && !KNOWN_UNMET.contains(&id.as_str()))
        .map(|(id, _)| id.as_str())
        .collect();
    let passed = r.rows.iter().filter(|(_, p)| *p).count();
    println!(
        "acceptance: {passed}/{} pass; known unmet {:?}; total {:.0} s",
        r.rows.len(),
        KNOWN_UNMET,
        total.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
