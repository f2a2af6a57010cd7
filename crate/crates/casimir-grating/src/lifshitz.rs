//! Fresnel coefficients and the flat-plate Lifshitz energy U(H) and U'(H).

use crate::error::{Error, Result};
use crate::material::{matsubara_grid, MaterialModel, Permittivity, PhysicalConstants};
use crate::quadrature::adaptive_gk;
use rayon::prelude::*;
use std::f64::consts::PI;

/// ζ, k, κ and κ̄ of one plane wave. κ̄ is `None` when ε is not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveKinematics {
    pub zeta: f64,
    pub k: f64,
    pub kappa: f64,
    pub kappa_bar: Option<f64>,
}

impl WaveKinematics {
    pub fn new(eps: Permittivity, zeta: f64, k: f64) -> Self {
        let q = zeta / PhysicalConstants::C;
        let kappa = (q * q + k * k).sqrt();
        let kappa_bar = match eps {
            Permittivity::Finite(e) => Some((e * q * q + k * k).sqrt()),
            _ => None,
        };
        WaveKinematics {
            zeta,
            k,
            kappa,
            kappa_bar,
        }
    }
}

/// TM and TE reflection coefficients from the vacuum wavenumber q = ζ/c,
/// the in-plane k and κ = √(q² + k²).
#[inline]
pub fn fresnel_pair(eps: Permittivity, q: f64, k: f64, kappa: f64) -> (f64, f64) {
    match eps {
        Permittivity::Finite(e) => {
            let kb = (e * q * q + k * k).sqrt();
            ((e * kappa - kb) / (e * kappa + kb), (kappa - kb) / (kappa + kb))
        }
        Permittivity::Divergent => (1.0, 0.0),
        Permittivity::Perfect => (1.0, -1.0),
    }
}

/// TM coefficient r₁ = (εκ − κ̄)/(εκ + κ̄).
pub fn fresnel_tm(eps: Permittivity, zeta: f64, k: f64) -> f64 {
    let w = WaveKinematics::new(eps, zeta, k);
    fresnel_pair(eps, zeta / PhysicalConstants::C, k, w.kappa).0
}

/// TE coefficient r₂ = (κ − κ̄)/(κ + κ̄).
pub fn fresnel_te(eps: Permittivity, zeta: f64, k: f64) -> f64 {
    let w = WaveKinematics::new(eps, zeta, k);
    fresnel_pair(eps, zeta / PhysicalConstants::C, k, w.kappa).1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateEnergyPoint {
    pub h: f64,
    /// J/m²
    pub u: f64,
    /// J/m³
    pub du: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LifshitzOptions {
    /// relative tolerance of each adaptive k-integral
    pub rel_tol: f64,
    /// truncation tolerance of the Matsubara sum
    pub matsubara_tol: f64,
    /// upper cutoff of x = 2H(κ − ζ/c)
    pub x_max: f64,
}

impl Default for LifshitzOptions {
    fn default() -> Self {
        LifshitzOptions {
            rel_tol: 1e-7,
            matsubara_tol: 1e-9,
            x_max: 64.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantity {
    Energy,
    Derivative,
}

fn integrand(qty: Quantity, eps: Permittivity, q: f64, kappa: f64, h: f64) -> f64 {
    let k = (kappa * kappa - q * q).max(0.0).sqrt();
    let (r1, r2) = fresnel_pair(eps, q, k, kappa);
    let e = (-2.0 * h * kappa).exp();
    let mut s = 0.0;
    for r in [r1, r2] {
        let a = r * r * e;
        s += match qty {
            Quantity::Energy => (-a).ln_1p(),
            Quantity::Derivative => 2.0 * kappa * a / (1.0 - a),
        };
    }
    s
}

/// ∫ d²k/(2π)² of the integrand at one imaginary frequency.
fn k_integral(
    qty: Quantity,
    eps: Permittivity,
    q: f64,
    h: f64,
    opts: &LifshitzOptions,
) -> Result<f64> {
    let s = 1.0 / (2.0 * h);
    // d²k/(2π)² = κ dκ / 2π with κ = q + x/2H
    let f = |x: f64| {
        let kappa = q + x * s;
        kappa * integrand(qty, eps, q, kappa, h)
    };
    let v = adaptive_gk(f, 0.0, opts.x_max, opts.rel_tol, abs_floor(qty, q + s, opts), 4000)?;
    Ok(v * s / (2.0 * PI))
}

/// Absolute tolerance far below the perfect-reflector value at wavenumber
/// scale `w`, so near-transparent media do not chase rounding noise.
fn abs_floor(qty: Quantity, w: f64, opts: &LifshitzOptions) -> f64 {
    let scale = match qty {
        Quantity::Energy => w,
        Quantity::Derivative => w * w,
    };
    1e-6 * opts.rel_tol * scale
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("separation {h} must be > 0")))
    }
}

fn matsubara_sum(
    qty: Quantity,
    model: &MaterialModel,
    t: f64,
    h: f64,
    opts: &LifshitzOptions,
) -> Result<f64> {
    check_h(h)?;
    let grid = matsubara_grid(t, opts.matsubara_tol, h)?;
    let terms: Vec<Result<f64>> = (0..=grid.n_max)
        .into_par_iter()
        .map(|n| {
            let zeta = grid.frequency(n);
            let q = zeta / PhysicalConstants::C;
            Ok(grid.weight(n) * k_integral(qty, model.response(zeta), q, h, opts)?)
        })
        .collect();
    let mut sum = 0.0;
    for t in terms {
        sum += t?;
    }
    Ok(PhysicalConstants::K_B * t * sum)
}

/// (ħ/2π)∫dζ replaces k_BT Σ'. With κ = ρ, q = ρ cos θ, k = ρ sin θ the
/// measure dq d²k becomes 2π ρ² sin θ dρ dθ.
fn zero_temperature(
    qty: Quantity,
    model: &MaterialModel,
    h: f64,
    opts: &LifshitzOptions,
) -> Result<f64> {
    check_h(h)?;
    let s = 1.0 / (2.0 * h);
    let inner = |theta: f64| -> Result<f64> {
        let (sn, cs) = theta.sin_cos();
        let f = |x: f64| {
            let rho = x * s;
            let q = rho * cs;
            let eps = model.response(q * PhysicalConstants::C);
            rho * rho * integrand(qty, eps, q, rho, h)
        };
        let tol = abs_floor(qty, s, opts) * s;
        Ok(sn * adaptive_gk(f, 0.0, opts.x_max, opts.rel_tol * 0.1, tol, 4000)? * s)
    };
    let mut failure = None;
    let outer = adaptive_gk(
        |theta| match inner(theta) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        0.5 * PI,
        opts.rel_tol,
        abs_floor(qty, s, opts) * s * s,
        2000,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    // ħ c/(2π) · 1/(2π)
    Ok(PhysicalConstants::HBAR * PhysicalConstants::C / (4.0 * PI * PI) * outer)
}

/// U(H) at temperature `t` (K). `t == 0` selects the frequency integral.
pub fn plate_energy(model: &MaterialModel, t: f64, h: f64) -> Result<f64> {
    plate_energy_with(model, t, h, &LifshitzOptions::default())
}

pub fn plate_energy_with(
    model: &MaterialModel,
    t: f64,
    h: f64,
    opts: &LifshitzOptions,
) -> Result<f64> {
    if t == 0.0 {
        zero_temperature(Quantity::Energy, model, h, opts)
    } else {
        matsubara_sum(Quantity::Energy, model, t, h, opts)
    }
}

/// U'(H) = ∂U/∂H by differentiation under the integral.
pub fn plate_energy_derivative(model: &MaterialModel, t: f64, h: f64) -> Result<f64> {
    plate_energy_derivative_with(model, t, h, &LifshitzOptions::default())
}

pub fn plate_energy_derivative_with(
    model: &MaterialModel,
    t: f64,
    h: f64,
    opts: &LifshitzOptions,
) -> Result<f64> {
    if t == 0.0 {
        zero_temperature(Quantity::Derivative, model, h, opts)
    } else {
        matsubara_sum(Quantity::Derivative, model, t, h, opts)
    }
}

pub fn plate_energy_t0(model: &MaterialModel, h: f64) -> Result<f64> {
    zero_temperature(Quantity::Energy, model, h, &LifshitzOptions::default())
}

pub fn plate_energy_derivative_t0(model: &MaterialModel, h: f64) -> Result<f64> {
    zero_temperature(Quantity::Derivative, model, h, &LifshitzOptions::default())
}

pub fn plate_energy_point(model: &MaterialModel, t: f64, h: f64) -> Result<PlateEnergyPoint> {
    Ok(PlateEnergyPoint {
        h,
        u: plate_energy(model, t, h)?,
        du: plate_energy_derivative(model, t, h)?,
    })
}

/// −π²ħc/(720 H³)
pub fn ideal_metal_energy_t0(h: f64) -> f64 {
    -PI * PI * PhysicalConstants::HBAR * PhysicalConstants::C / (720.0 * h.powi(3))
}
