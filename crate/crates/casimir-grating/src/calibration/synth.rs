use super::dataset::{resample_linear, uniform_grid, Curve, DeflectionDataset};
use crate::corrugation::CorrugationGeometry;
use crate::electrostatics::x_of_z;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Calibration parameters the synthetic data are generated with.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthTruth {
    /// N per signal unit
    pub sigma: f64,
    /// m
    pub z0: f64,
    /// V
    pub v0: f64,
    /// m per signal unit
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    /// applied voltages (V)
    pub voltages: Vec<f64>,
    pub repetitions: usize,
    /// largest piezo extension (m)
    pub z_piezo_max: f64,
    /// acquisition step (m)
    pub raw_step: f64,
    /// output grid step (m)
    pub grid_step: f64,
    /// Gaussian noise per raw sample (signal units)
    pub noise: f64,
    /// linear drift, signal units per m of z_piezo
    pub drift_slope: f64,
    pub drift_offset: f64,
    /// reported uncertainty of m
    pub m_err: f64,
}

impl SynthSpec {
    /// Eleven voltages from −145 to −40 mV, ten repetitions each, 3 μm extension.
    pub fn eleven_voltages(noise: f64) -> Self {
        SynthSpec {
            voltages: (0..11).map(|i| (-145.0 + 10.5 * i as f64) * 1e-3).collect(),
            repetitions: 10,
            z_piezo_max: 3.0e-6,
            raw_step: 0.2e-9,
            grid_step: 1e-9,
            noise,
            drift_slope: 0.0,
            drift_offset: 0.0,
            m_err: 0.0,
        }
    }
}

/// Inverts σ′S = F_cas(z) + X(z)(V − V₀)², z = z_piezo + mS + z₀ for each
/// voltage and repetition, adds drift and noise, and resamples to the grid.
/// `casimir` returns the attractive force magnitude (N) at separation z.
pub fn synth_generate(
    casimir: &(dyn Fn(f64) -> f64 + Sync),
    truth: &SynthTruth,
    geom: &CorrugationGeometry,
    spec: &SynthSpec,
    seed: u64,
) -> Result<DeflectionDataset> {
    if !(spec.raw_step > 0.0 && spec.grid_step >= spec.raw_step && spec.z_piezo_max > spec.grid_step) {
        return Err(Error::config("synth", "need 0 < raw_step <= grid_step < z_piezo_max"));
    }
    if spec.voltages.is_empty() || spec.repetitions == 0 {
        return Err(Error::config("synth", "need at least one voltage and one repetition"));
    }
    let raw = uniform_grid(0.0, spec.z_piezo_max, spec.raw_step);
    let grid = uniform_grid(0.0, spec.z_piezo_max, spec.grid_step);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::config("noise", e.to_string()))?;
    let jobs: Vec<(usize, f64, usize)> = spec
        .voltages
        .iter()
        .enumerate()
        .flat_map(|(iv, &v)| (0..spec.repetitions).map(move |r| (iv, v, r)))
        .collect();
    let curves: Vec<Result<Curve>> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, v, rep))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let dv2 = (v - truth.v0).powi(2);
            let mut sig = Vec::with_capacity(raw.len());
            for &zp in &raw {
                let mut s = 0.0;
                for _ in 0..8 {
                    let z = zp + truth.m * s + truth.z0;
                    if !(z > 0.0) {
                        return Err(Error::Domain(format!(
                            "synthetic curve reaches contact at z_piezo = {:.2} nm",
                            zp * 1e9
                        )));
                    }
                    s = (casimir(z) + x_of_z(geom, z)? * dv2) / truth.sigma;
                }
                let n = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                sig.push(s + spec.drift_offset + spec.drift_slope * zp + n);
            }
            let signal = if spec.grid_step == spec.raw_step {
                sig
            } else {
                resample_linear(&raw, &sig, &grid)
            };
            Ok(Curve {
                voltage: v,
                repetition: rep,
                signal,
            })
        })
        .collect();
    Ok(DeflectionDataset {
        z_piezo: if spec.grid_step == spec.raw_step { raw } else { grid },
        curves: curves.into_iter().collect::<Result<_>>()?,
        m: truth.m,
        m_err: spec.m_err,
    })
}
