//! Configuration files, dataset files and CSV/JSON output. Configs use
//! experiment units (nm, μm, eV, mV, pN); everything is converted to SI here.

use crate::calibration::{Curve, DeflectionDataset};
use crate::corrugation::{CorrugationGeometry, ForceCurve, Method, PlateExtent};
use crate::error::{Error, Result};
use crate::material::{MaterialModel, Oscillator, PhysicalConstants};
use crate::spline::CubicSpline;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const NM: f64 = 1e-9;
const UM: f64 = 1e-6;
const MV: f64 = 1e-3;
const PN: f64 = 1e-12;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct OscillatorConfig {
    pub f_eV2: f64,
    pub omega_eV: f64,
    pub g_eV: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct MaterialConfig {
    #[serde(default)]
    pub plasma_frequency_eV: Option<f64>,
    #[serde(default)]
    pub relaxation_frequency_eV: Option<f64>,
    #[serde(default)]
    pub oscillators: Vec<OscillatorConfig>,
    #[serde(default)]
    pub ideal_metal: bool,
}

impl MaterialConfig {
    pub fn to_model(&self) -> Result<MaterialModel> {
        if self.ideal_metal {
            return Ok(MaterialModel::IdealMetal);
        }
        let wp = self
            .plasma_frequency_eV
            .ok_or_else(|| Error::config("plasma_frequency_eV", "required unless ideal_metal is set"))?;
        let gamma = self
            .relaxation_frequency_eV
            .ok_or_else(|| Error::config("relaxation_frequency_eV", "required unless ideal_metal is set"))?;
        let ev = PhysicalConstants::ev_to_rad_per_s;
        let osc = self
            .oscillators
            .iter()
            .map(|o| Oscillator {
                strength: o.f_eV2 * ev(1.0) * ev(1.0),
                resonance: ev(o.omega_eV),
                damping: ev(o.g_eV),
            })
            .collect();
        MaterialModel::drude_lorentz(ev(wp), ev(gamma), osc)
    }
}

pub fn parse_material_config(text: &str) -> Result<MaterialModel> {
    let c: MaterialConfig =
        serde_json::from_str(text).map_err(|e| Error::config("material", e.to_string()))?;
    c.to_model()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GeometryConfig {
    pub period_nm: f64,
    pub amplitude_plate_nm: f64,
    pub amplitude_sphere_nm: f64,
    pub Lx_um: f64,
    pub Ly_um: f64,
    pub sphere_radius_um: f64,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub roughness_plate_nm: f64,
    #[serde(default)]
    pub roughness_sphere_nm: f64,
}

impl GeometryConfig {
    pub fn to_geometry(&self) -> Result<CorrugationGeometry> {
        let g = CorrugationGeometry {
            period: self.period_nm * NM,
            amplitude_plate: self.amplitude_plate_nm * NM,
            amplitude_sphere: self.amplitude_sphere_nm * NM,
            lx: self.Lx_um * UM,
            ly: self.Ly_um * UM,
            radius: self.sphere_radius_um * UM,
            theta: self.theta_deg.to_radians(),
            phase: self.phase_rad,
            roughness_plate: self.roughness_plate_nm * NM,
            roughness_sphere: self.roughness_sphere_nm * NM,
        };
        g.validate()?;
        Ok(g)
    }
}

pub fn parse_geometry_config(text: &str) -> Result<CorrugationGeometry> {
    let c: GeometryConfig =
        serde_json::from_str(text).map_err(|e| Error::config("geometry", e.to_string()))?;
    c.to_geometry()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSection {
    pub z_min_nm: f64,
    pub z_max_nm: f64,
    #[serde(default = "one")]
    pub z_step_nm: f64,
    pub theta_deg: Vec<f64>,
    pub methods: Vec<String>,
    #[serde(default = "finite_extent")]
    pub extent: PlateExtent,
    #[serde(default)]
    pub table_nodes: Option<usize>,
    #[serde(default)]
    pub x_nodes: Option<usize>,
    #[serde(default)]
    pub y_nodes_per_beat: Option<usize>,
    #[serde(default)]
    pub table_cache_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn finite_extent() -> PlateExtent {
    PlateExtent::Finite
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct CalibrateSection {
    pub dataset: PathBuf,
    #[serde(default)]
    pub endpoints_nm: Option<Vec<f64>>,
    #[serde(default)]
    pub drift_start_um: Option<f64>,
    #[serde(default)]
    pub instrument_floor_pN: Option<f64>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrostaticsSection {
    pub z_nm: Vec<f64>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SynthSection {
    /// force CSV as written by the force command
    pub theory_csv: PathBuf,
    #[serde(default = "der")]
    pub theory_method: String,
    #[serde(default)]
    pub theory_theta_deg: f64,
    pub sigma_pN_per_mV: f64,
    pub z0_nm: f64,
    pub v0_mV: f64,
    pub m_nm_per_unit: f64,
    #[serde(default)]
    pub m_err_nm_per_unit: f64,
    pub voltages_mV: Vec<f64>,
    pub repetitions: usize,
    /// noise per sample, in signal units
    pub noise: f64,
    #[serde(default)]
    pub drift_per_um: f64,
    #[serde(default)]
    pub drift_offset: f64,
    #[serde(default = "piezo_max")]
    pub z_piezo_max_um: f64,
    #[serde(default = "raw_step")]
    pub raw_step_nm: f64,
}

fn der() -> String {
    "DER".into()
}

fn piezo_max() -> f64 {
    3.0
}

fn raw_step() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RunConfig {
    pub material: Option<PathBuf>,
    pub geometry: PathBuf,
    #[serde(default = "room")]
    pub temperature_K: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub force: Option<ForceSection>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSection>,
    #[serde(default)]
    pub electrostatics: Option<ElectrostaticsSection>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

fn room() -> f64 {
    300.0
}

impl RunConfig {
    /// Relative paths are taken relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = self.material.as_mut() {
            fix(m);
        }
        fix(&mut self.geometry);
        if let Some(c) = self.calibrate.as_mut() {
            fix(&mut c.dataset);
        }
        if let Some(s) = self.synth.as_mut() {
            fix(&mut s.theory_csv);
        }
        if let Some(d) = self.force.as_mut().and_then(|f| f.table_cache_dir.as_mut()) {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_K >= 0.0 && self.temperature_K.is_finite()) {
            return Err(Error::config("temperature_K", "must be >= 0"));
        }
        if let Some(f) = &self.force {
            if f.theta_deg.is_empty() {
                return Err(Error::config("force.theta_deg", "at least one crossing angle is required"));
            }
            if let Some(t) = f.theta_deg.iter().find(|t| !(t.abs() <= 3.0)) {
                return Err(Error::config("force.theta_deg", format!("{t} lies outside [0, 3] degrees")));
            }
            if f.methods.is_empty() {
                return Err(Error::config("force.methods", "at least one method is required"));
            }
            for m in &f.methods {
                m.parse::<Method>()
                    .map_err(|_| Error::config("force.methods", format!("unknown method `{m}`")))?;
            }
            if !(f.z_min_nm > 0.0 && f.z_max_nm >= f.z_min_nm && f.z_step_nm > 0.0) {
                return Err(Error::config("force.z_*_nm", "need 0 < z_min <= z_max and z_step > 0"));
            }
            if f.table_nodes.is_some_and(|n| n < 8) {
                return Err(Error::config("force.table_nodes", "must be >= 8"));
            }
        }
        if let Some(c) = &self.calibrate {
            if c.confidence.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::config("calibrate.confidence", "must lie in (0, 1)"));
            }
            if c.instrument_floor_pN.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::config("calibrate.instrument_floor_pN", "must be >= 0"));
            }
        }
        if let Some(e) = &self.electrostatics {
            if e.z_nm.is_empty() || e.z_nm.iter().any(|z| !(*z > 0.0)) {
                return Err(Error::config("electrostatics.z_nm", "need positive separations"));
            }
            if e.tolerance.is_some_and(|t| !(t > 0.0)) {
                return Err(Error::config("electrostatics.tolerance", "must be > 0"));
            }
        }
        if let Some(s) = &self.synth {
            if !(s.sigma_pN_per_mV > 0.0 && s.m_nm_per_unit > 0.0 && s.repetitions > 0) {
                return Err(Error::config("synth", "sigma, m and repetitions must be positive"));
            }
            if !(s.noise >= 0.0) {
                return Err(Error::config("synth.noise", "must be >= 0"));
            }
        }
        Ok(())
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    c.validate()?;
    Ok(c)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut c = parse_run_config(&text)?;
    c.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok(c)
}

pub fn load_material(path: &Path) -> Result<MaterialModel> {
    parse_material_config(&std::fs::read_to_string(path)?)
}

pub fn load_geometry(path: &Path) -> Result<CorrugationGeometry> {
    parse_geometry_config(&std::fs::read_to_string(path)?)
}

/// σ′ in pN/mV ↔ N per signal unit.
pub fn sigma_from_pn_per_mv(v: f64) -> f64 {
    v * PN / MV
}

pub fn sigma_to_pn_per_mv(v: f64) -> f64 {
    v * MV / PN
}

// ---- dataset ----

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCurve {
    pub file: PathBuf,
    #[serde(rename = "voltage_mV")]
    pub voltage_mv: f64,
    pub repetition: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub m_nm_per_unit: f64,
    #[serde(default)]
    pub m_err_nm_per_unit: f64,
    pub curves: Vec<ManifestCurve>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    if !(m.m_nm_per_unit > 0.0 && m.m_nm_per_unit.is_finite()) {
        return Err(Error::Data("manifest: m_nm_per_unit must be > 0".into()));
    }
    if !(m.m_err_nm_per_unit >= 0.0) {
        return Err(Error::Data("manifest: m_err_nm_per_unit must be >= 0".into()));
    }
    if m.curves.is_empty() {
        return Err(Error::Data("manifest lists no curves".into()));
    }
    if let Some(c) = m.curves.iter().find(|c| !c.voltage_mv.is_finite()) {
        return Err(Error::Data(format!("manifest: non-finite voltage for {}", c.file.display())));
    }
    Ok(m)
}

/// Parses `z_piezo_nm,S_def_signal` rows; returns z in m and the signal.
pub fn parse_dataset_csv(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?.clone();
    if headers.len() != 2 || &headers[0] != "z_piezo_nm" || &headers[1] != "S_def_signal" {
        return Err(Error::Data(
            "line 1: header must be `z_piezo_nm,S_def_signal`".into(),
        ));
    }
    let mut z = Vec::new();
    let mut s = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Data(format!("line {line}: expected 2 fields, got {}", rec.len())));
        }
        let parse = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("line {line}: `{t}` is not a finite number")))
        };
        z.push(parse(&rec[0])? * NM);
        s.push(parse(&rec[1])?);
    }
    if z.len() < 2 {
        return Err(Error::Data("curve has fewer than 2 samples".into()));
    }
    if let Some(i) = z.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Data(format!("line {}: z_piezo_nm is not increasing", i + 3)));
    }
    Ok((z, s))
}

pub fn load_dataset(manifest_path: &Path) -> Result<DeflectionDataset> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Data(format!("{}: {e}", manifest_path.display())))?;
    let man = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut grid: Option<Vec<f64>> = None;
    let mut curves = Vec::with_capacity(man.curves.len());
    for c in &man.curves {
        let p = base.join(&c.file);
        let bytes = std::fs::read(&p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
        let (z, s) = parse_dataset_csv(&bytes).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
        match &grid {
            None => grid = Some(z),
            Some(g) => {
                if g.len() != z.len() || g.iter().zip(&z).any(|(a, b)| (a - b).abs() > 1e-6 * NM) {
                    return Err(Error::Data(format!(
                        "{}: z_piezo grid differs from the first curve",
                        p.display()
                    )));
                }
            }
        }
        curves.push(Curve {
            voltage: c.voltage_mv * MV,
            repetition: c.repetition,
            signal: s,
        });
    }
    let d = DeflectionDataset {
        z_piezo: grid.unwrap_or_default(),
        curves,
        m: man.m_nm_per_unit * NM,
        m_err: man.m_err_nm_per_unit * NM,
    };
    d.validate()?;
    Ok(d)
}

pub fn write_dataset(dir: &Path, data: &DeflectionDataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(data.curves.len());
    for (i, c) in data.curves.iter().enumerate() {
        let name = format!("curve_{i:04}.csv");
        let mut w = csv::Writer::from_path(dir.join(&name)).map_err(csv_err)?;
        w.write_record(["z_piezo_nm", "S_def_signal"]).map_err(csv_err)?;
        for (z, s) in data.z_piezo.iter().zip(&c.signal) {
            w.write_record([fmt_nm(*z), fmt(*s)]).map_err(csv_err)?;
        }
        w.flush()?;
        entries.push(ManifestCurve {
            file: PathBuf::from(name),
            voltage_mv: c.voltage / MV,
            repetition: c.repetition,
        });
    }
    let man = Manifest {
        m_nm_per_unit: data.m / NM,
        m_err_nm_per_unit: data.m_err / NM,
        curves: entries,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &man)?;
    Ok(path)
}

// ---- output ----

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

/// Shortest round-trip representation, identical across runs.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Separations in nm, rounded to 1e-9 nm so grid arithmetic noise does not leak into files.
pub fn fmt_nm(z: f64) -> String {
    fmt((z / NM * 1e9).round() / 1e9)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Rows `z_nm,F_pN,method,theta_deg` with attractive magnitudes positive.
pub fn write_force_csv(path: &Path, curves: &[ForceCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["z_nm", "F_pN", "method", "theta_deg"]).map_err(csv_err)?;
    for c in curves {
        for (z, f) in &c.points {
            w.write_record([
                fmt_nm(*z),
                fmt(-f / PN),
                c.method.tag().to_string(),
                fmt(c.theta.to_degrees()),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the force CSV back; magnitudes are returned as attractive (negative) forces.
pub fn read_force_csv(bytes: &[u8]) -> Result<Vec<ForceCurve>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let h = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?.clone();
    if h.iter().collect::<Vec<_>>() != ["z_nm", "F_pN", "method", "theta_deg"] {
        return Err(Error::Data("line 1: header must be `z_nm,F_pN,method,theta_deg`".into()));
    }
    let mut out: Vec<ForceCurve> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("line {line}: bad number in column {}", i + 1)))
        };
        let z = num(0)? * NM;
        let f = -num(1)? * PN;
        let method: Method = rec[2].parse().map_err(|_| Error::Data(format!("line {line}: unknown method")))?;
        let theta = num(3)?.to_radians();
        match out
            .iter_mut()
            .find(|c| c.method == method && (c.theta - theta).abs() < 1e-12)
        {
            Some(c) => c.points.push((z, f)),
            None => out.push(ForceCurve {
                method,
                theta,
                points: vec![(z, f)],
            }),
        }
    }
    for c in &mut out {
        c.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// Attractive force magnitude F(z) from tabulated points: cubic spline of
/// ln F against ln z, power-law continuation outside the table.
#[derive(Debug, Clone)]
pub struct ForceInterpolant {
    spline: CubicSpline,
    lo: (f64, f64, f64),
    hi: (f64, f64, f64),
}

impl ForceInterpolant {
    pub fn new(curve: &ForceCurve) -> Result<Self> {
        let pts: Vec<(f64, f64)> = curve
            .points
            .iter()
            .filter(|(z, f)| *z > 0.0 && *f != 0.0)
            .map(|(z, f)| (z.ln(), f.abs().ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Data("theory curve needs at least 3 points".into()));
        }
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let spline = CubicSpline::new(x.clone(), y.clone())
            .ok_or_else(|| Error::Data("theory curve separations must be distinct and sorted".into()))?;
        let n = x.len();
        let slope = |a: usize, b: usize| (y[b] - y[a]) / (x[b] - x[a]);
        Ok(ForceInterpolant {
            lo: (x[0], y[0], slope(0, 1)),
            hi: (x[n - 1], y[n - 1], slope(n - 2, n - 1)),
            spline,
        })
    }

    pub fn eval(&self, z: f64) -> f64 {
        let t = z.ln();
        let v = if t < self.lo.0 {
            self.lo.1 + self.lo.2 * (t - self.lo.0)
        } else if t > self.hi.0 {
            self.hi.1 + self.hi.2 * (t - self.hi.0)
        } else {
            self.spline.eval(t)
        };
        v.exp()
    }
}
