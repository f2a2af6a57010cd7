//! Second-order electrostatic energy between corrugated plates and the
//! sphere–plate force coefficient X(z).

use crate::corrugation::CorrugationGeometry;
use crate::error::{Error, Result};
use crate::laplace::{laplace_solve, GridSpec};
use crate::material::PhysicalConstants;
use rayon::prelude::*;
use std::f64::consts::PI;

/// One Fourier component a·cos(k·r + φ) of a zero-mean height profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileMode {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

impl ProfileMode {
    fn k(&self) -> f64 {
        self.kx.hypot(self.ky)
    }
}

/// Height profiles of the two plates as sums of plane-wave components over
/// a rectangle L_x × L_y. Spectral integrals use the large-L_x limit, so
/// only components with equal k_x correlate; the finite L_y enters through
/// the y-overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfilePair {
    pub plate: Vec<ProfileMode>,
    pub sphere: Vec<ProfileMode>,
    pub lx: f64,
    pub ly: f64,
}

impl SpectralProfilePair {
    /// Small-angle crossed sinusoids of the geometry.
    pub fn from_geometry(geom: &CorrugationGeometry) -> Self {
        let k = geom.wavenumber();
        SpectralProfilePair {
            plate: vec![ProfileMode {
                amplitude: geom.amplitude_plate,
                kx: k,
                ky: 0.0,
                phase: geom.phase,
            }],
            sphere: vec![ProfileMode {
                amplitude: geom.amplitude_sphere,
                kx: k,
                ky: -k * geom.theta,
                phase: geom.phase,
            }],
            lx: geom.lx,
            ly: geom.ly,
        }
    }

    /// (1/A)∫ h_a h_b d²r for two modes.
    fn overlap(&self, a: &ProfileMode, b: &ProfileMode) -> f64 {
        if a.amplitude == 0.0 || b.amplitude == 0.0 {
            return 0.0;
        }
        if (a.kx - b.kx).abs() > 1e-12 * a.kx.abs().max(b.kx.abs()) {
            return 0.0;
        }
        if a.kx == 0.0 && a.ky == 0.0 {
            return a.amplitude * b.amplitude * a.phase.cos() * b.phase.cos();
        }
        // average of ½cos((k_a,y − k_b,y) y + φ_a − φ_b) over |y| < L_y/2
        let u = 0.5 * (a.ky - b.ky) * self.ly;
        0.5 * a.amplitude * b.amplitude * sinc(u) * (a.phase - b.phase).cos()
    }
}

pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

fn check_z(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("separation {z} must be > 0")))
    }
}

fn self_kernel(k: f64, z: f64) -> f64 {
    if k == 0.0 {
        return 0.5 / z;
    }
    0.5 * k / (k * z).tanh()
}

fn cross_kernel(k: f64, z: f64) -> f64 {
    if k == 0.0 {
        return 0.5 / z;
    }
    let e = (-k * z).exp();
    k * e / (-(-2.0 * k * z).exp_m1())
}

/// Energy per area to second order in the profiles.
pub fn electro_energy_spectral(profiles: &SpectralProfilePair, z: f64, v: f64) -> Result<f64> {
    check_z(z)?;
    let eps0 = PhysicalConstants::EPS0;
    let mut corr = 0.0;
    for modes in [&profiles.plate, &profiles.sphere] {
        for a in modes.iter() {
            for b in modes.iter() {
                let o = profiles.overlap(a, b);
                if o != 0.0 {
                    corr += self_kernel(0.5 * (a.k() + b.k()), z) * o;
                }
            }
        }
    }
    for a in &profiles.plate {
        for b in &profiles.sphere {
            let o = profiles.overlap(a, b);
            if o != 0.0 {
                corr -= 2.0 * cross_kernel(0.5 * (a.k() + b.k()), z) * o;
            }
        }
    }
    Ok(eps0 * v * v / (2.0 * z) + eps0 * v * v / (z * z) * corr)
}

/// Flat, self-corrugation and cross-correlation parts of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectroBreakdown {
    pub flat: f64,
    pub self_term: f64,
    pub cross_term: f64,
}

impl ElectroBreakdown {
    pub fn total(&self) -> f64 {
        self.flat + self.self_term - self.cross_term
    }
}

/// Bracket of the closed form, split into its two pieces (both ≥ 0 for θ = 0).
fn corrugation_bracket(geom: &CorrugationGeometry, z: f64) -> (f64, f64) {
    let a1 = geom.amplitude_plate;
    let a2 = geom.amplitude_sphere;
    let lam = geom.period;
    let s = PI / lam * (a1 * a1 + a2 * a2) / (2.0 * PI * z / lam).tanh();
    let e = (-2.0 * PI * z / lam).exp();
    let c = 4.0 * PI * a1 * a2 / lam * e / (-(-4.0 * PI * z / lam).exp_m1())
        * sinc(PI * geom.ly * geom.theta / lam);
    (s, c)
}

fn energy_breakdown(geom: &CorrugationGeometry, z: f64, v: f64) -> Result<ElectroBreakdown> {
    check_z(z)?;
    let eps0 = PhysicalConstants::EPS0;
    let (s, c) = corrugation_bracket(geom, z);
    let pre = 0.5 * eps0 * v * v / (z * z);
    Ok(ElectroBreakdown {
        flat: eps0 * v * v / (2.0 * z),
        self_term: pre * s,
        cross_term: pre * c,
    })
}

/// Closed-form energy per area of the crossed sinusoids at angle `geom.theta`.
pub fn electro_energy_corrugated(geom: &CorrugationGeometry, z: f64, v: f64) -> Result<f64> {
    Ok(energy_breakdown(geom, z, v)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectroCoefficient {
    pub z: f64,
    /// N/V²
    pub x: f64,
    pub breakdown: ElectroBreakdown,
}

/// X(z) in N/V² without the breakdown or range diagnostics.
pub fn x_of_z(geom: &CorrugationGeometry, z: f64) -> Result<f64> {
    Ok(2.0 * PI * geom.radius * energy_breakdown(geom, z, 1.0)?.total())
}

/// X(z) = 2πR·E(z, 1 V); the electrostatic force is X(z)(V − V₀)².
pub fn x_coefficient(geom: &CorrugationGeometry, z: f64) -> Result<ElectroCoefficient> {
    if z / geom.radius > 0.01 {
        log::warn!("z/R = {:.3} exceeds 0.01", z / geom.radius);
    }
    let b = energy_breakdown(geom, z, 1.0)?;
    let s = 2.0 * PI * geom.radius;
    let breakdown = ElectroBreakdown {
        flat: s * b.flat,
        self_term: s * b.self_term,
        cross_term: s * b.cross_term,
    };
    Ok(ElectroCoefficient {
        z,
        x: breakdown.total(),
        breakdown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub z: f64,
    pub perturbative: f64,
    pub laplace: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub rows: Vec<DeviationRow>,
    pub max_rel_dev: f64,
}

/// Field solve vs the closed form at θ = 0 over `z_grid`, at 1 V. The field
/// energy is Richardson-extrapolated from `grid` and its refinement.
pub fn validate_perturbative(
    geom: &CorrugationGeometry,
    z_grid: &[f64],
    grid: GridSpec,
) -> Result<DeviationReport> {
    let flat = geom.with_theta(0.0);
    let rows: Vec<Result<DeviationRow>> = z_grid
        .par_iter()
        .map(|&z| {
            let coarse = laplace_solve(&flat, z, 1.0, grid)?;
            let fine = laplace_solve(&flat, z, 1.0, grid.refined())?;
            let laplace = fine.energy + (fine.energy - coarse.energy) / 3.0;
            let perturbative = electro_energy_corrugated(&flat, z, 1.0)?;
            Ok(DeviationRow {
                z,
                perturbative,
                laplace,
                rel_dev: (perturbative - laplace) / laplace,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let max_rel_dev = rows.iter().map(|r| r.rel_dev.abs()).fold(0.0, f64::max);
    Ok(DeviationReport { rows, max_rel_dev })
}
