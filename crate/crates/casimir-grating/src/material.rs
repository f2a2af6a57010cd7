//! Dielectric response on the imaginary frequency axis and Matsubara grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// CODATA 2018 values in SI units.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalConstants;

impl PhysicalConstants {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const C: f64 = 299_792_458.0;
    pub const K_B: f64 = 1.380_649e-23;
    pub const EPS0: f64 = 8.854_187_812_8e-12;
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

    /// Angular frequency (rad/s) of a photon energy given in eV.
    pub fn ev_to_rad_per_s(ev: f64) -> f64 {
        ev * Self::ELEMENTARY_CHARGE / Self::HBAR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    /// f_i in rad²/s²
    pub strength: f64,
    /// ω_i in rad/s
    pub resonance: f64,
    /// g_i in rad/s
    pub damping: f64,
}

/// Drude term plus Lorentz oscillators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrudeLorentz {
    pub plasma_frequency: f64,
    pub relaxation_frequency: f64,
    pub oscillators: Vec<Oscillator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MaterialModel {
    Dispersive(DrudeLorentz),
    /// Perfect reflector for both polarizations at every frequency.
    IdealMetal,
    /// Frequency independent ε. Used as a reference medium (ε = 1 is vacuum).
    Constant(f64),
}

/// Value of ε(iζ) as seen by the reflection coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Permittivity {
    Finite(f64),
    /// Drude pole at ζ = 0: ε diverges while εζ² → 0.
    Divergent,
    /// Ideal metal.
    Perfect,
}

impl MaterialModel {
    pub fn drude_lorentz(
        plasma_frequency: f64,
        relaxation_frequency: f64,
        oscillators: Vec<Oscillator>,
    ) -> Result<Self> {
        let m = MaterialModel::Dispersive(DrudeLorentz {
            plasma_frequency,
            relaxation_frequency,
            oscillators,
        });
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MaterialModel::Dispersive(d) => {
                if !(d.plasma_frequency > 0.0) || !d.plasma_frequency.is_finite() {
                    return Err(Error::Domain("plasma frequency must be positive".into()));
                }
                if !(d.relaxation_frequency >= 0.0) {
                    return Err(Error::Domain("relaxation frequency must be >= 0".into()));
                }
                for (i, o) in d.oscillators.iter().enumerate() {
                    if !(o.strength >= 0.0) || !(o.damping >= 0.0) || !(o.resonance >= 0.0) {
                        return Err(Error::Domain(format!(
                            "oscillator {i}: strength, resonance and damping must be >= 0"
                        )));
                    }
                }
                Ok(())
            }
            MaterialModel::IdealMetal => Ok(()),
            MaterialModel::Constant(e) => {
                if *e >= 1.0 && e.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("constant permittivity {e} must be >= 1")))
                }
            }
        }
    }

    pub fn is_ideal_metal(&self) -> bool {
        matches!(self, MaterialModel::IdealMetal)
    }

    /// Response at ζ ≥ 0, including the ideal-metal and ζ = 0 limits.
    pub fn response(&self, zeta: f64) -> Permittivity {
        match self {
            MaterialModel::IdealMetal => Permittivity::Perfect,
            MaterialModel::Constant(e) => Permittivity::Finite(*e),
            MaterialModel::Dispersive(d) => {
                if zeta == 0.0 {
                    Permittivity::Divergent
                } else {
                    Permittivity::Finite(d.eval(zeta))
                }
            }
        }
    }
}

impl DrudeLorentz {
    /// ε(iζ) for ζ > 0.
    pub fn eval(&self, zeta: f64) -> f64 {
        let wp = self.plasma_frequency;
        let mut e = 1.0 + wp * wp / (zeta * (zeta + self.relaxation_frequency));
        for o in &self.oscillators {
            e += o.strength / (o.resonance * o.resonance + zeta * zeta + zeta * o.damping);
        }
        e
    }
}

/// ε(iζ) of a dispersive or constant model. ζ = 0 with a Drude term gives
/// [`Permittivity::Divergent`]; ideal metals have no ε and are rejected.
pub fn epsilon_iw(model: &MaterialModel, zeta: f64) -> Result<Permittivity> {
    if !(zeta >= 0.0) {
        return Err(Error::Domain(format!("frequency {zeta} must be >= 0")));
    }
    if model.is_ideal_metal() {
        return Err(Error::Domain(
            "ideal metal has no permittivity; use the perfect-reflector limit".into(),
        ));
    }
    Ok(model.response(zeta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatsubaraGrid {
    pub temperature: f64,
    pub n_max: usize,
}

impl MatsubaraGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI * PhysicalConstants::K_B * self.temperature / PhysicalConstants::HBAR
    }

    pub fn frequency(&self, n: usize) -> f64 {
        n as f64 * self.spacing()
    }

    /// Primed-sum weight.
    pub fn weight(&self, n: usize) -> f64 {
        if n == 0 {
            0.5
        } else {
            1.0
        }
    }

    pub fn len(&self) -> usize {
        self.n_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// (ζ_n, weight) pairs for n = 0..=n_max.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..=self.n_max).map(move |n| (self.frequency(n), self.weight(n)))
    }
}

/// Grid truncated where the tail of the sum at separation `z_min` falls below
/// `target_rel_tol` relative to the n = 0 term.
///
/// A term at ζ_n scales like (1 + a n) e^{-a n} with a = 2 z_min ζ_1 / c, the
/// κ-integral of e^{-2Hκ} from κ = ζ_n/c.
pub fn matsubara_grid(t: f64, target_rel_tol: f64, z_min: f64) -> Result<MatsubaraGrid> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("temperature {t} K must be > 0")));
    }
    if !(z_min > 0.0) {
        return Err(Error::Domain(format!("z_min {z_min} must be > 0")));
    }
    if !(target_rel_tol > 0.0 && target_rel_tol < 1.0) {
        return Err(Error::Domain("target_rel_tol must lie in (0, 1)".into()));
    }
    let mut g = MatsubaraGrid {
        temperature: t,
        n_max: 0,
    };
    let a = 2.0 * z_min * g.spacing() / PhysicalConstants::C;
    // geometric tail factor, then a half-weighted n = 0 reference term
    let tail = 1.0 / (1.0 - (-a).exp());
    let mut n = 1usize;
    loop {
        let x = a * n as f64;
        if (1.0 + x) * (-x).exp() * tail < 0.5 * target_rel_tol {
            break;
        }
        n += 1;
        if n > 10_000_000 {
            return Err(Error::Domain("Matsubara truncation exceeds 1e7 terms".into()));
        }
    }
    g.n_max = n;
    Ok(g)
}
