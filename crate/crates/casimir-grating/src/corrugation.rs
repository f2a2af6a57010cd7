//! Crossed sinusoidal corrugations: local separation, PFA and
//! derivative-expansion energies, and sphere–plate forces.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::table::PlateFunctionTable;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Lengths in m, angles in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrugationGeometry {
    pub period: f64,
    /// A₁
    pub amplitude_plate: f64,
    /// A₂
    pub amplitude_sphere: f64,
    pub lx: f64,
    pub ly: f64,
    pub radius: f64,
    pub theta: f64,
    pub phase: f64,
    /// roughness amplitudes, carried as metadata
    pub roughness_plate: f64,
    pub roughness_sphere: f64,
}

impl CorrugationGeometry {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        pos(self.period, "period")?;
        pos(self.lx, "Lx")?;
        pos(self.ly, "Ly")?;
        pos(self.radius, "sphere_radius")?;
        if !(self.amplitude_plate >= 0.0 && self.amplitude_sphere >= 0.0) {
            return Err(Error::config("amplitude", "amplitudes must be >= 0"));
        }
        if !(self.theta.abs() <= 3f64.to_radians() + 1e-12) {
            return Err(Error::config("theta", "crossing angle must lie within [0°, 3°]"));
        }
        Ok(())
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// h₁, h₂ and their gradients at (x, y), small-angle form of h₂.
    pub fn profiles(&self, x: f64, y: f64) -> Profiles {
        let k = self.wavenumber();
        let p1 = k * x + self.phase;
        let p2 = k * (x - y * self.theta) + self.phase;
        let (s1, c1) = p1.sin_cos();
        let (s2, c2) = p2.sin_cos();
        let g1 = [-self.amplitude_plate * k * s1, 0.0];
        let g2x = -self.amplitude_sphere * k * s2;
        Profiles {
            h1: self.amplitude_plate * c1,
            h2: self.amplitude_sphere * c2,
            grad_h1: g1,
            grad_h2: [g2x, -self.theta * g2x],
        }
    }

    /// H = z + h₁ − h₂.
    pub fn local_separation(&self, z: f64, x: f64, y: f64) -> Result<f64> {
        let p = self.profiles(x, y);
        let h = z + p.h1 - p.h2;
        if h > 0.0 {
            Ok(h)
        } else {
            Err(Error::Contact {
                h_nm: h * 1e9,
                x_nm: x * 1e9,
                y_nm: y * 1e9,
            })
        }
    }

    /// Separation range spanned at mean separation z.
    pub fn separation_bounds(&self, z: f64) -> (f64, f64) {
        let a = self.amplitude_plate + self.amplitude_sphere;
        (z - a, z + a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profiles {
    pub h1: f64,
    pub h2: f64,
    pub grad_h1: [f64; 2],
    pub grad_h2: [f64; 2],
}

/// Averaging domain of the cell integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateExtent {
    /// one period in x times the finite plate width L_y
    Finite,
    /// unit cell of infinite plates
    Infinite,
}

#[derive(Debug, Clone, Copy)]
pub struct CellQuadrature {
    pub x_nodes: usize,
    pub y_nodes_per_beat: usize,
    pub min_y_nodes: usize,
}

impl Default for CellQuadrature {
    fn default() -> Self {
        CellQuadrature {
            x_nodes: 64,
            y_nodes_per_beat: 64,
            min_y_nodes: 64,
        }
    }
}

impl CellQuadrature {
    pub fn doubled(self) -> Self {
        CellQuadrature {
            x_nodes: 2 * self.x_nodes,
            y_nodes_per_beat: 2 * self.y_nodes_per_beat,
            min_y_nodes: 2 * self.min_y_nodes,
        }
    }
}

/// Weighted nodes (y, w) with Σw = 1 for the y-average.
fn y_rule(geom: &CorrugationGeometry, extent: PlateExtent, quad: &CellQuadrature) -> Vec<(f64, f64)> {
    let theta = geom.theta.abs();
    if theta == 0.0 {
        return vec![(0.0, 1.0)];
    }
    match extent {
        PlateExtent::Finite => {
            let beats = (geom.ly * theta / geom.period).ceil().max(1.0) as usize;
            let n = (quad.y_nodes_per_beat * beats).max(quad.min_y_nodes);
            let (t, w) = gauss_legendre(n);
            t.iter()
                .zip(&w)
                .map(|(t, w)| (0.5 * geom.ly * t, 0.5 * w))
                .collect()
        }
        PlateExtent::Infinite => {
            let n = quad.y_nodes_per_beat.max(quad.min_y_nodes);
            let beat = geom.period / theta;
            (0..n)
                .map(|j| ((j as f64 + 0.5) * beat / n as f64, 1.0 / n as f64))
                .collect()
        }
    }
}

/// Average of `f(H, ∇H·∇H, ∇h₁·∇h₂)` over the cell at mean separation z.
fn cell_average(
    geom: &CorrugationGeometry,
    z: f64,
    extent: PlateExtent,
    quad: &CellQuadrature,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    let ys = y_rule(geom, extent, quad);
    let nx = quad.x_nodes.max(1);
    let mut acc = 0.0;
    for i in 0..nx {
        let x = (i as f64 + 0.5) * geom.period / nx as f64;
        let mut row = 0.0;
        for (y, w) in &ys {
            let p = geom.profiles(x, *y);
            let h = z + p.h1 - p.h2;
            if !(h > 0.0) {
                return Err(Error::Contact {
                    h_nm: h * 1e9,
                    x_nm: x * 1e9,
                    y_nm: y * 1e9,
                });
            }
            let gh = [p.grad_h1[0] - p.grad_h2[0], p.grad_h1[1] - p.grad_h2[1]];
            let gh2 = gh[0] * gh[0] + gh[1] * gh[1];
            let g12 = p.grad_h1[0] * p.grad_h2[0] + p.grad_h1[1] * p.grad_h2[1];
            row += w * f(h, gh2, g12);
        }
        acc += row;
    }
    Ok(acc / nx as f64)
}

fn check_range(table: &PlateFunctionTable, geom: &CorrugationGeometry, z: f64) -> Result<()> {
    let (lo, hi) = geom.separation_bounds(z);
    let (a, b) = table.range();
    if lo <= 0.0 {
        return Err(Error::Contact {
            h_nm: lo * 1e9,
            x_nm: 0.0,
            y_nm: 0.0,
        });
    }
    if lo < a * (1.0 - 1e-12) || hi > b * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "z = {:.2} nm needs H in [{:.2}, {:.2}] nm but the table covers [{:.2}, {:.2}] nm",
            z * 1e9,
            lo * 1e9,
            hi * 1e9,
            a * 1e9,
            b * 1e9
        )));
    }
    Ok(())
}

/// PFA energy per area: cell average of U(H).
pub fn energy_pfa(
    geom: &CorrugationGeometry,
    table: &PlateFunctionTable,
    z: f64,
    extent: PlateExtent,
    quad: &CellQuadrature,
) -> Result<f64> {
    check_range(table, geom, z)?;
    cell_average(geom, z, extent, quad, |h, _, _| table.values_unchecked(h).u)
}

/// Derivative-expansion energy per area:
/// ⟨U(H) + α(H) ∇H·∇H − ½(H U'(H) − U(H)) ∇h₁·∇h₂⟩.
pub fn energy_derivative_expansion(
    geom: &CorrugationGeometry,
    table: &PlateFunctionTable,
    z: f64,
    extent: PlateExtent,
    quad: &CellQuadrature,
) -> Result<f64> {
    check_range(table, geom, z)?;
    cell_average(geom, z, extent, quad, |h, gh2, g12| {
        let v = table.values_unchecked(h);
        v.u + v.alpha * gh2 - 0.5 * (h * v.du - v.u) * g12
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum Method {
    #[serde(rename = "DER")]
    Der,
    #[serde(rename = "PFA")]
    Pfa,
    #[serde(rename = "DER_T0")]
    DerT0,
    #[serde(rename = "DER_IDEAL")]
    DerIdeal,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Der => "DER",
            Method::Pfa => "PFA",
            Method::DerT0 => "DER_T0",
            Method::DerIdeal => "DER_IDEAL",
        }
    }

    pub fn uses_gradient(&self) -> bool {
        !matches!(self, Method::Pfa)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DER" => Ok(Method::Der),
            "PFA" => Ok(Method::Pfa),
            "DER_T0" => Ok(Method::DerT0),
            "DER_IDEAL" => Ok(Method::DerIdeal),
            _ => Err(Error::config("methods", format!("unknown method `{s}`"))),
        }
    }
}

/// Placeholder for a stochastic roughness correction; returns the force unchanged.
pub fn roughness_correction(force: f64, _geom: &CorrugationGeometry) -> f64 {
    force
}

/// F = 2πR·U_corr (negative for attraction). The table must match the
/// method (finite T, zero T or ideal metal).
pub fn force_sphere(
    geom: &CorrugationGeometry,
    table: &PlateFunctionTable,
    z: f64,
    method: Method,
    extent: PlateExtent,
    quad: &CellQuadrature,
) -> Result<f64> {
    if z / geom.radius > 0.01 {
        log::warn!(
            "z/R = {:.3} exceeds 0.01; sphere PFA outside its validated regime",
            z / geom.radius
        );
    }
    let u = if method.uses_gradient() {
        energy_derivative_expansion(geom, table, z, extent, quad)?
    } else {
        energy_pfa(geom, table, z, extent, quad)?
    };
    Ok(roughness_correction(2.0 * PI * geom.radius * u, geom))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceCurve {
    pub method: Method,
    pub theta: f64,
    /// (z in m, F in N), sorted by z
    pub points: Vec<(f64, f64)>,
}

pub struct CurveOutcome {
    pub curve: ForceCurve,
    pub failures: Vec<(f64, Error)>,
}

pub fn force_curve(
    geom: &CorrugationGeometry,
    table: &PlateFunctionTable,
    z_grid: &[f64],
    method: Method,
    extent: PlateExtent,
    quad: &CellQuadrature,
) -> CurveOutcome {
    let mut zs = z_grid.to_vec();
    zs.sort_by(|a, b| a.total_cmp(b));
    let results: Vec<(f64, Result<f64>)> = zs
        .par_iter()
        .map(|&z| (z, force_sphere(geom, table, z, method, extent, quad)))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (z, r) in results {
        match r {
            Ok(f) => points.push((z, f)),
            Err(e) => failures.push((z, e)),
        }
    }
    CurveOutcome {
        curve: ForceCurve {
            method,
            theta: geom.theta,
            points,
        },
        failures,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub z: f64,
    pub ratio: f64,
    pub difference: f64,
}

/// F/F_ref and F − F_ref on a shared z-grid.
pub fn comparison_report(curve: &ForceCurve, reference: &ForceCurve) -> Result<Vec<ComparisonRow>> {
    if curve.points.len() != reference.points.len() {
        return Err(Error::Alignment(format!(
            "{} points vs {} reference points",
            curve.points.len(),
            reference.points.len()
        )));
    }
    curve
        .points
        .iter()
        .zip(&reference.points)
        .map(|((z, f), (zr, fr))| {
            if (z - zr).abs() > 1e-6 * z.abs().max(1e-12) {
                return Err(Error::Alignment(format!(
                    "z = {:.3} nm vs {:.3} nm",
                    z * 1e9,
                    zr * 1e9
                )));
            }
            Ok(ComparisonRow {
                z: *z,
                ratio: f / fr,
                difference: f - fr,
            })
        })
        .collect()
}
