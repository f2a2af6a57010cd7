use crate::error::{Error, Result};

/// One deflection curve S_def(z_piezo) at applied voltage `voltage` (V).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub voltage: f64,
    pub repetition: usize,
    pub signal: Vec<f64>,
}

/// Repeated curves on a shared z_piezo grid (m). `m` is the deflection
/// coefficient in m per signal unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionDataset {
    pub z_piezo: Vec<f64>,
    pub curves: Vec<Curve>,
    pub m: f64,
    pub m_err: f64,
}

impl DeflectionDataset {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::Data(format!("deflection coefficient m = {} must be > 0", self.m)));
        }
        if self.z_piezo.len() < 2 || self.z_piezo.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("z_piezo grid must be strictly increasing".into()));
        }
        if self.curves.is_empty() {
            return Err(Error::Data("dataset has no curves".into()));
        }
        for c in &self.curves {
            if c.signal.len() != self.z_piezo.len() {
                return Err(Error::Data(format!(
                    "curve at {} V, repetition {} has {} samples, grid has {}",
                    c.voltage,
                    c.repetition,
                    c.signal.len(),
                    self.z_piezo.len()
                )));
            }
            if c.signal.iter().any(|s| !s.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite sample in curve at {} V, repetition {}",
                    c.voltage, c.repetition
                )));
            }
        }
        Ok(())
    }

    /// Distinct applied voltages, ascending.
    pub fn voltages(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.curves.iter().map(|c| c.voltage).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftFit {
    pub slope: f64,
    pub intercept: f64,
    pub corrected: Vec<f64>,
}

pub const MIN_DRIFT_SAMPLES: usize = 100;

/// Fits a line to `signal` where z_piezo > `z_start` and subtracts it everywhere.
pub fn drift_correct(z_piezo: &[f64], signal: &[f64], z_start: f64) -> Result<DriftFit> {
    let pts: Vec<(f64, f64)> = z_piezo
        .iter()
        .zip(signal)
        .filter(|(z, _)| **z > z_start)
        .map(|(z, s)| (*z, *s))
        .collect();
    if pts.len() < MIN_DRIFT_SAMPLES {
        return Err(Error::Data(format!(
            "only {} samples beyond {:.0} nm for the drift fit, need {}",
            pts.len(),
            z_start * 1e9,
            MIN_DRIFT_SAMPLES
        )));
    }
    let (slope, intercept) = line_fit(&pts);
    let corrected = z_piezo
        .iter()
        .zip(signal)
        .map(|(z, s)| s - (intercept + slope * z))
        .collect();
    Ok(DriftFit {
        slope,
        intercept,
        corrected,
    })
}

/// Ordinary least-squares line through (x, y), returns (slope, intercept).
pub(crate) fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// z = z_piezo + m S_def + z₀, elementwise.
pub fn reconstruct_separation(z_piezo: &[f64], signal: &[f64], m: f64, z0: f64) -> Vec<f64> {
    z_piezo.iter().zip(signal).map(|(z, s)| z + m * s + z0).collect()
}

/// Linear interpolation of (x, y) at the points `at`. Samples are sorted
/// by x first, so small non-monotone jitter in x is tolerated.
pub fn resample_linear(x: &[f64], y: &[f64], at: &[f64]) -> Vec<f64> {
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    if pts.windows(2).any(|w| w[1].0 < w[0].0) {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let n = pts.len();
    at.iter()
        .map(|&t| {
            let i = pts.partition_point(|p| p.0 <= t).clamp(1, n - 1);
            let (x0, y0) = pts[i - 1];
            let (x1, y1) = pts[i];
            if x1 == x0 {
                0.5 * (y0 + y1)
            } else {
                y0 + (y1 - y0) * (t - x0) / (x1 - x0)
            }
        })
        .collect()
}

/// Uniform grid from `start` in steps of `step` up to and including `end`.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + step * i as f64).collect()
}
