use super::{CalibrationResult, PreparedCurves};
use crate::corrugation::CorrugationGeometry;
use crate::electrostatics::x_of_z;
use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided Student t quantile for `confidence` with `df` degrees of freedom.
pub fn student_factor(confidence: f64, df: usize) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) || df == 0 {
        return Err(Error::config("confidence", "must lie in (0, 1) with df >= 1"));
    }
    let t = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + 0.5 * confidence))
}

/// Per-z mean Casimir force over all curves, attraction positive (N).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredForce {
    pub z: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub curves: usize,
    /// ⟨(V − V₀)²⟩ over curves, used by the error budget
    pub mean_dv2: f64,
    /// ⟨S_def⟩ per z
    pub mean_signal: Vec<f64>,
}

/// F_cas = σ′S_def − X(z)(V − V₀)² on z = z_rel + z₀, averaged over curves.
pub fn extract_casimir(
    prep: &PreparedCurves,
    cal: &CalibrationResult,
    geom: &CorrugationGeometry,
) -> Result<MeasuredForce> {
    if !cal.v0.value.is_finite() {
        return Err(Error::Fit("calibration has no residual potential".into()));
    }
    let n = prep.signal.len();
    if n < 2 {
        return Err(Error::Data("need at least two curves to average".into()));
    }
    let sigma = cal.sigma.value;
    let z0 = cal.z0.value;
    let mean_dv2 = prep
        .voltages
        .iter()
        .map(|v| (v - cal.v0.value).powi(2))
        .sum::<f64>()
        / n as f64;
    let mut z = Vec::new();
    let mut mean = Vec::new();
    let mut sd = Vec::new();
    let mut ms = Vec::new();
    for (k, zr) in prep.z_rel.iter().enumerate() {
        let zz = zr + z0;
        if zz <= 0.0 {
            continue;
        }
        let x = x_of_z(geom, zz)?;
        let vals: Vec<f64> = prep
            .signal
            .iter()
            .zip(&prep.voltages)
            .map(|(s, v)| sigma * s[k] - x * (v - cal.v0.value).powi(2))
            .collect();
        let m = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        z.push(zz);
        mean.push(m);
        sd.push(var.sqrt());
        ms.push(prep.signal.iter().map(|s| s[k]).sum::<f64>() / n as f64);
    }
    Ok(MeasuredForce {
        z,
        mean,
        std_dev: sd,
        curves: n,
        mean_dv2,
        mean_signal: ms,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorBudgetOptions {
    /// instrument noise floor of the systematic error (N)
    pub instrument_floor: f64,
    pub confidence: f64,
    /// window of the force-slope estimate (m)
    pub slope_window: f64,
}

impl Default for ErrorBudgetOptions {
    fn default() -> Self {
        ErrorBudgetOptions {
            instrument_floor: 0.65e-12,
            confidence: 0.67,
            slope_window: 5e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    pub z: Vec<f64>,
    pub random: Vec<f64>,
    pub systematic: Vec<f64>,
    pub total: Vec<f64>,
    pub confidence: f64,
    pub dof: usize,
    /// random error varies by more than 20% across z
    pub random_flag: bool,
}

/// Random error of the mean at the given confidence, systematic error from
/// first-order propagation of the calibration uncertainties (with the σ′–z₀
/// correlation) plus an instrument floor, total in quadrature.
pub fn error_budget(
    measured: &MeasuredForce,
    cal: &CalibrationResult,
    prep: &PreparedCurves,
    geom: &CorrugationGeometry,
    opts: &ErrorBudgetOptions,
) -> Result<ErrorBudget> {
    let dof = measured.curves.saturating_sub(1).max(1);
    let t = student_factor(opts.confidence, dof)?;
    let tc = cal.confidence_factor;
    let (d_sigma, d_z0, d_v0, d_m) = (
        tc * cal.sigma.std_error,
        tc * cal.z0.std_error,
        tc * cal.v0.std_error,
        tc * prep.m_err,
    );
    let rho = cal.fit.correlation.clamp(-1.0, 1.0);
    let n = measured.z.len();
    let mean_dv: f64 = prep.voltages.iter().map(|v| v - cal.v0.value).sum::<f64>()
        / prep.voltages.len() as f64;
    let step = if n > 1 { measured.z[1] - measured.z[0] } else { 1e-9 };
    let w = ((opts.slope_window / step).round() as usize).max(1);
    let mut random = Vec::with_capacity(n);
    let mut systematic = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    for k in 0..n {
        let z = measured.z[k];
        let r = t * measured.std_dev[k] / (measured.curves as f64).sqrt();
        let (a, b) = (k.saturating_sub(w), (k + w).min(n - 1));
        let f_slope = if b > a {
            (measured.mean[b] - measured.mean[a]) / (measured.z[b] - measured.z[a])
        } else {
            0.0
        };
        let x = x_of_z(geom, z)?;
        let h = 1e-3 * z;
        let x_slope = (x_of_z(geom, z + h)? - x_of_z(geom, z - h)?) / (2.0 * h);
        // F(z) = σ′S(z − z₀) − X(z)(V − V₀)², so ∂F/∂z₀ = −σ′S′ = −(F′ + X′⟨ΔV²⟩)
        let g_z0 = -(f_slope + x_slope * measured.mean_dv2);
        let s_mean = measured.mean_signal[k];
        let g_sigma = s_mean;
        // σ′ and z₀ come from one fit and are strongly anticorrelated
        let calib = (g_sigma * d_sigma).powi(2)
            + (g_z0 * d_z0).powi(2)
            + 2.0 * rho * g_sigma * d_sigma * g_z0 * d_z0;
        let terms = [
            opts.instrument_floor,
            g_z0 * s_mean * d_m,
            2.0 * x * mean_dv * d_v0,
        ];
        let s = (terms.iter().map(|v| v * v).sum::<f64>() + calib.max(0.0)).sqrt();
        random.push(r);
        systematic.push(s);
        total.push((r * r + s * s).sqrt());
    }
    let rmean = random.iter().sum::<f64>() / n.max(1) as f64;
    let rmax = random.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rmin = random.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ErrorBudget {
        z: measured.z.clone(),
        random_flag: n > 0 && (rmax - rmin) > 0.2 * rmean,
        random,
        systematic,
        total,
        confidence: opts.confidence,
        dof,
    })
}
