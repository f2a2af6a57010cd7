//! Electrostatic calibration of AFM deflection data and Casimir force extraction.
//!
//! Signals follow the convention σ′S_def = F_cas + X(z)(V − V₀)² with
//! attractive forces counted positive, and z = z_piezo + m S_def + z₀.

mod dataset;
mod extract;
mod fit;
mod synth;

pub use dataset::{
    drift_correct, reconstruct_separation, resample_linear, uniform_grid, Curve, DeflectionDataset,
    DriftFit, MIN_DRIFT_SAMPLES,
};
pub use extract::{error_budget, extract_casimir, student_factor, ErrorBudget, ErrorBudgetOptions, MeasuredForce};
pub use fit::{
    endpoint_constant, endpoint_grid, endpoint_scan, fit_beta_curve, fit_parabola,
    vertex_with_background, weighted_mean_and_slope, BetaFit, BetaFitOptions, BetaSample, EndpointFit,
    Estimate, ParabolaFit,
};
pub use synth::{synth_generate, SynthSpec, SynthTruth};

use crate::corrugation::CorrugationGeometry;
use crate::electrostatics::x_of_z;
use crate::error::{Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// z_piezo beyond which the signal is treated as drift only (m)
    pub drift_start: f64,
    /// analysis grid step (m)
    pub grid_step: f64,
    /// end points of the β fit, first one is the main fit (m)
    pub endpoints: Vec<f64>,
    /// initial guess used to place the first end point (m)
    pub z0_guess: f64,
    /// drift/calibration refinement passes
    pub iterations: usize,
    pub confidence: f64,
    pub beta_fit: BetaFitOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            drift_start: 1.7e-6,
            grid_step: 1e-9,
            endpoints: endpoint_grid(1000e-9),
            z0_guess: 100e-9,
            iterations: 3,
            confidence: 0.67,
            beta_fit: BetaFitOptions {
                linear_background: true,
                ..Default::default()
            },
        }
    }
}

/// V₀ from the parabola fit at one relative separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V0Point {
    pub z_rel: f64,
    pub v0: Estimate,
}

#[derive(Debug)]
pub struct CalibrationResult {
    pub v0: Estimate,
    pub z0: Estimate,
    /// σ′ in N per signal unit
    pub sigma: Estimate,
    pub fit: BetaFit,
    /// Student factor of the reported intervals
    pub confidence_factor: f64,
    /// repetitions the errors of (V₀, z₀, σ′) were jackknifed over, 0 when
    /// they come from the fit covariance
    pub jackknife_groups: usize,
    pub confidence: f64,
    pub v0_series: Vec<V0Point>,
    pub v0_slope: Estimate,
    /// V₀(z) slope differs from zero by more than 3 standard errors
    pub v0_flag: bool,
    pub beta_series: Vec<BetaSample>,
    pub endpoint_scan: Vec<EndpointFit>,
    /// some end point fit failed or moved outside its 2σ band
    pub endpoint_flag: bool,
}

/// Drift-corrected signals resampled on a common z_rel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCurves {
    pub z_rel: Vec<f64>,
    pub voltages: Vec<f64>,
    pub repetitions: Vec<usize>,
    pub signal: Vec<Vec<f64>>,
    pub m: f64,
    pub m_err: f64,
}

#[derive(Debug)]
pub struct CalibrationRun {
    pub result: CalibrationResult,
    pub prepared: PreparedCurves,
}

fn prepare(
    data: &DeflectionDataset,
    baseline: &[Vec<f64>],
    opts: &CalibrationOptions,
) -> Result<PreparedCurves> {
    let mut zrel = Vec::with_capacity(data.curves.len());
    let mut corrected = Vec::with_capacity(data.curves.len());
    for (c, base) in data.curves.iter().zip(baseline) {
        let resid: Vec<f64> = c.signal.iter().zip(base).map(|(s, b)| s - b).collect();
        let d = drift_correct(&data.z_piezo, &resid, opts.drift_start)?;
        let s: Vec<f64> = c
            .signal
            .iter()
            .zip(&data.z_piezo)
            .map(|(s, z)| s - (d.intercept + d.slope * z))
            .collect();
        zrel.push(reconstruct_separation(&data.z_piezo, &s, data.m, 0.0));
        corrected.push(s);
    }
    let step = opts.grid_step;
    let lo = zrel.iter().map(|z| z[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = zrel.iter().map(|z| *z.last().unwrap()).fold(f64::INFINITY, f64::min);
    let start = (lo / step).ceil() * step;
    if !(hi > start + 10.0 * step) {
        return Err(Error::Data("curves share no common separation range".into()));
    }
    let grid = uniform_grid(start, hi, step);
    let signal = zrel
        .iter()
        .zip(&corrected)
        .map(|(z, s)| resample_linear(z, s, &grid))
        .collect();
    Ok(PreparedCurves {
        z_rel: grid,
        voltages: data.curves.iter().map(|c| c.voltage).collect(),
        repetitions: data.curves.iter().map(|c| c.repetition).collect(),
        signal,
        m: data.m,
        m_err: data.m_err,
    })
}

/// β(z) fit and V₀ average on prepared curves.
fn estimate(
    prep: &PreparedCurves,
    volts: &[f64],
    z_rel_max: f64,
    geom: &CorrugationGeometry,
    opts: &BetaFitOptions,
) -> Result<(GridFits, BetaFit, Estimate, Estimate)> {
    let mut fits = grid_fits(prep, volts, z_rel_max);
    let fit = fit_beta_curve(&fits.beta, geom, opts)?;
    // vertex from the linear coefficient and the fitted curvature, so the
    // weights do not depend on the noisy per-point curvature
    fits.v0 = fits
        .slopes
        .iter()
        .map(|&(z, centre, b)| {
            let a = fit.model(geom, z)?;
            Ok(V0Point {
                z_rel: z,
                v0: Estimate {
                    value: centre - b.value / (2.0 * a),
                    std_error: b.std_error / (2.0 * a),
                },
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = fits.v0.iter().map(|p| p.z_rel).collect();
    let ys: Vec<f64> = fits.v0.iter().map(|p| p.v0.value).collect();
    let es: Vec<f64> = fits.v0.iter().map(|p| p.v0.std_error).collect();
    let (mut v0, slope) = weighted_mean_and_slope(&xs, &ys, &es)?;
    if opts.linear_background {
        let betas = fits
            .slopes
            .iter()
            .map(|&(z, _, _)| fit.model(geom, z))
            .collect::<Result<Vec<_>>>()?;
        v0 = vertex_with_background(&xs, &ys, &es, &betas)?;
    }
    Ok((fits, fit, v0, slope))
}

/// Delete-one-repetition jackknife standard errors of (V₀, z₀, σ′). Whole
/// curves are dropped, so errors correlated along z (drift lines, resampling)
/// are carried along. None with fewer than 3 repetitions.
fn jackknife(
    prep: &PreparedCurves,
    volts: &[f64],
    z_rel_max: f64,
    geom: &CorrugationGeometry,
    opts: &BetaFitOptions,
) -> Result<Option<(usize, [f64; 3])>> {
    let mut reps = prep.repetitions.clone();
    reps.sort_unstable();
    reps.dedup();
    if reps.len() < 3 {
        return Ok(None);
    }
    let reps_ref = &reps;
    let est: Vec<[f64; 3]> = reps_ref
        .par_iter()
        .map(|&r| {
            let keep: Vec<usize> = (0..prep.signal.len()).filter(|&i| prep.repetitions[i] != r).collect();
            let sub = PreparedCurves {
                z_rel: prep.z_rel.clone(),
                voltages: keep.iter().map(|&i| prep.voltages[i]).collect(),
                repetitions: keep.iter().map(|&i| prep.repetitions[i]).collect(),
                signal: keep.iter().map(|&i| prep.signal[i].clone()).collect(),
                m: prep.m,
                m_err: prep.m_err,
            };
            let (_, fit, v0, _) = estimate(&sub, volts, z_rel_max, geom, opts)?;
            Ok([v0.value, fit.z0.value, fit.sigma.value])
        })
        .collect::<Result<_>>()?;
    let n = est.len() as f64;
    let mut se = [0.0; 3];
    for (j, s) in se.iter_mut().enumerate() {
        let mean = est.iter().map(|e| e[j]).sum::<f64>() / n;
        *s = ((n - 1.0) / n * est.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>()).sqrt();
    }
    Ok(Some((reps.len(), se)))
}

struct GridFits {
    beta: Vec<BetaSample>,
    v0: Vec<V0Point>,
    /// (z_rel, mean voltage, linear coefficient)
    slopes: Vec<(f64, f64, Estimate)>,
}

/// Parabola fits at each grid point with z_rel ≤ `z_rel_max`.
fn grid_fits(prep: &PreparedCurves, volts: &[f64], z_rel_max: f64) -> GridFits {
    // curve indices per voltage
    let groups: Vec<Vec<usize>> = volts
        .iter()
        .map(|v| (0..prep.voltages.len()).filter(|&i| prep.voltages[i] == *v).collect())
        .collect();
    let total: usize = groups.iter().map(|g| g.len()).sum();
    let dof = total.saturating_sub(groups.len());
    let mut beta = Vec::new();
    let mut v0 = Vec::new();
    let mut slopes = Vec::new();
    for (k, &z) in prep.z_rel.iter().enumerate() {
        if z > z_rel_max {
            break;
        }
        let mut means = Vec::with_capacity(groups.len());
        let mut ss = 0.0;
        for g in &groups {
            let m = g.iter().map(|&i| prep.signal[i][k]).sum::<f64>() / g.len() as f64;
            ss += g.iter().map(|&i| (prep.signal[i][k] - m).powi(2)).sum::<f64>();
            means.push(m);
        }
        let sigma: Option<Vec<f64>> = if dof > 0 && ss > 0.0 {
            let pooled = ss / dof as f64;
            Some(groups.iter().map(|g| (pooled / g.len() as f64).sqrt()).collect())
        } else {
            None
        };
        match fit_parabola(&means, volts, sigma.as_deref()) {
            Ok(p) => {
                beta.push(BetaSample {
                    z_rel: z,
                    beta: p.beta.value,
                    sigma: p.beta.std_error,
                });
                v0.push(V0Point { z_rel: z, v0: p.v0 });
                slopes.push((z, p.centre, p.slope));
            }
            Err(e) => log::debug!("parabola fit skipped at z_rel = {:.1} nm: {e}", z * 1e9),
        }
    }
    GridFits { beta, v0, slopes }
}

/// Full calibration: drift subtraction, parabola fits, β(z) fit for (σ′, z₀),
/// V₀ average, end-point scan. The drift line is refit on the signal minus
/// the current electrostatic model, so the electrostatic tail beyond the
/// drift threshold does not leak into the line.
pub fn calibrate(
    data: &DeflectionDataset,
    geom: &CorrugationGeometry,
    opts: &CalibrationOptions,
) -> Result<CalibrationRun> {
    data.validate()?;
    let volts = data.voltages();
    if volts.len() < 3 {
        return Err(Error::Data(format!("{} distinct voltages, need at least 3", volts.len())));
    }
    let z_end = opts
        .endpoints
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !z_end.is_finite() {
        return Err(Error::config("endpoints", "at least one end point is required"));
    }
    let n = data.z_piezo.len();
    let mut baseline = vec![vec![0.0; n]; data.curves.len()];
    let mut z0_guess = opts.z0_guess;
    let mut state = None;
    let beta_opts = opts.beta_fit;
    for _ in 0..opts.iterations.max(1) {
        let prep = prepare(data, &baseline, opts)?;
        let z_rel_max = z_end - z0_guess;
        let (fits, fit, v0, slope) = estimate(&prep, &volts, z_rel_max, geom, &beta_opts)?;
        z0_guess = fit.z0.value;
        for (c, base) in data.curves.iter().zip(baseline.iter_mut()) {
            let dv = c.voltage - v0.value;
            for (i, b) in base.iter_mut().enumerate() {
                let z = data.z_piezo[i] + data.m * c.signal[i] + fit.z0.value;
                *b = if z > 0.0 {
                    x_of_z(geom, z)? * dv * dv / fit.sigma.value
                } else {
                    0.0
                };
            }
        }
        state = Some((prep, fits, fit, v0, slope, beta_opts, z_rel_max));
    }
    let (prep, fits, fit, mut v0, v0_slope, beta_opts, z_rel_max) = state.expect("at least one pass");
    let scan = endpoint_scan(&fits.beta, geom, fit.z0.value, &opts.endpoints, &beta_opts);
    let endpoint_flag = !endpoint_constant(&scan, &fit, 2.0);
    let (mut z0, mut sigma) = (fit.z0, fit.sigma);
    let (groups, df) = match jackknife(&prep, &volts, z_rel_max, geom, &beta_opts)? {
        Some((g, se)) => {
            v0.std_error = se[0];
            z0.std_error = se[1];
            sigma.std_error = se[2];
            (g, g - 1)
        }
        None => (0, prep.voltages.len().saturating_sub(1).max(1)),
    };
    let factor = student_factor(opts.confidence, df)?;
    Ok(CalibrationRun {
        result: CalibrationResult {
            v0,
            z0,
            sigma,
            fit,
            confidence_factor: factor,
            jackknife_groups: groups,
            confidence: opts.confidence,
            v0_series: fits.v0,
            v0_flag: v0_slope.value.abs() > 3.0 * v0_slope.std_error,
            v0_slope,
            beta_series: fits.beta,
            endpoint_scan: scan,
            endpoint_flag,
        },
        prepared: prep,
    })
}
