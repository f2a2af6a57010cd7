//! Second-order scattering kernel G̃(Q) and the gradient coefficient α(H).
//!
//! Conventions. `Q` is the wavevector of the height profile, `k` the
//! integration wavevector and `k' = k + Q`. The reflection amplitudes of a
//! deformed surface are written with the normalized second-order coefficient
//! `B2n_pp(k, k; k')`, whose value at `k' = k` is `2κ r_p` (a rigid shift of
//! the surface by `a` multiplies r_p by e^{2κa}). In that normalization the TE
//! coefficient is the negative of the printed TE expression.

use crate::error::{Error, Result};
use crate::lifshitz::fresnel_pair;
use crate::material::{matsubara_grid, MaterialModel, Permittivity, PhysicalConstants};
use crate::quadrature::{gauss_legendre, PanelRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec2 = [f64; 2];
pub type PolarizationMatrix = [[f64; 2]; 2];

fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn nonzero(k: Vec2, kp: Vec2) -> Result<(f64, f64)> {
    let (a, b) = (norm(k), norm(kp));
    if a > 0.0 && b > 0.0 {
        Ok((a, b))
    } else {
        Err(Error::Domain("wavevectors must have nonzero magnitude".into()))
    }
}

struct Kin {
    q: f64,
    kappa: f64,
    kappa_bar: f64,
}

fn kin(eps: f64, zeta: f64, k: f64) -> Kin {
    let q = zeta / PhysicalConstants::C;
    Kin {
        q,
        kappa: (q * q + k * k).sqrt(),
        kappa_bar: (eps * q * q + k * k).sqrt(),
    }
}

/// Diagonal of d₁(ζ, k): √(ε−1) (κ̄/(εκ+κ̄), (ζ/c)/(κ+κ̄)).
pub fn d1_matrix(eps: f64, zeta: f64, k: f64) -> [f64; 2] {
    let w = kin(eps, zeta, k);
    let s = (eps - 1.0).sqrt();
    [
        s * w.kappa_bar / (eps * w.kappa + w.kappa_bar),
        s * w.q / (w.kappa + w.kappa_bar),
    ]
}

/// B(ζ, k, k') = d₁(k) · M(k, k') · d₁(k') for finite ε.
pub fn b_matrix(eps: f64, zeta: f64, k: Vec2, kp: Vec2) -> Result<PolarizationMatrix> {
    let (a, b) = nonzero(k, kp)?;
    let (w, wp) = (kin(eps, zeta, a), kin(eps, zeta, b));
    let (d, dp) = (d1_matrix(eps, zeta, a), d1_matrix(eps, zeta, b));
    let c = dot(k, kp) / (a * b);
    let s = cross(k, kp) / (a * b);
    let m = [
        [c + eps * a * b / (w.kappa_bar * wp.kappa_bar), s],
        [s, -c],
    ];
    Ok([
        [d[0] * m[0][0] * dp[0], d[0] * m[0][1] * dp[1]],
        [d[1] * m[1][0] * dp[0], d[1] * m[1][1] * dp[1]],
    ])
}

/// TM second-order coefficient exactly as printed in the source.
///
/// Kept for reference. It has mismatched dimensions in the last two terms of
/// the bracket and fails the rigid-shift identity; see [`b2_tm_normalized`].
pub fn b2_tm(eps: f64, zeta: f64, k: Vec2, kp: Vec2) -> Result<f64> {
    let (a, b) = nonzero(k, kp)?;
    let (w, wp) = (kin(eps, zeta, a), kin(eps, zeta, b));
    let kk = dot(k, kp);
    let bracket = (eps - 1.0) / (eps * wp.kappa + wp.kappa_bar)
        * (eps * a * a * b * b - w.kappa_bar.powi(2) * kk * kk / (a * a))
        + 2.0 * eps * (wp.kappa + wp.kappa_bar) / (eps * wp.kappa + wp.kappa_bar) * w.kappa * kk
        + eps * w.kappa_bar * w.q * w.q
        + w.kappa_bar * (wp.kappa - wp.kappa_bar);
    Ok(2.0 * (eps - 1.0) / (eps * w.kappa + w.kappa_bar).powi(2) * bracket)
}

/// TE second-order coefficient exactly as printed in the source.
pub fn b2_te(eps: f64, zeta: f64, k: Vec2, kp: Vec2) -> Result<f64> {
    let (a, b) = nonzero(k, kp)?;
    let (w, wp) = (kin(eps, zeta, a), kin(eps, zeta, b));
    let kk = dot(k, kp);
    let bracket = (eps - 1.0) / (eps * wp.kappa + wp.kappa_bar) * (kk * kk / (a * a) - b * b)
        + w.kappa_bar
        - wp.kappa_bar
        + wp.kappa;
    Ok(2.0 * (eps - 1.0) * w.q * w.q / (w.kappa + w.kappa_bar).powi(2) * bracket)
}

/// Normalized TM coefficient B2n_11(k, k; k').
///
/// Differs from the printed form in three places: κ → κ̄ in the (k·k') term,
/// κ̄ → κ̄² in the last term, and the overall sign.
pub fn b2_tm_normalized(eps: f64, zeta: f64, k: Vec2, kp: Vec2) -> Result<f64> {
    let (a, b) = nonzero(k, kp)?;
    let (w, wp) = (kin(eps, zeta, a), kin(eps, zeta, b));
    Ok(b2n_tm_finite(eps, w.q, a, b, dot(k, kp), &w, &wp))
}

/// Normalized TE coefficient B2n_22(k, k; k') = −(printed TE form).
pub fn b2_te_normalized(eps: f64, zeta: f64, k: Vec2, kp: Vec2) -> Result<f64> {
    Ok(-b2_te(eps, zeta, k, kp)?)
}

fn b2n_tm_finite(eps: f64, q: f64, a: f64, b: f64, kk: f64, w: &Kin, wp: &Kin) -> f64 {
    let kb = w.kappa_bar;
    let den_p = eps * wp.kappa + wp.kappa_bar;
    let bracket = (eps - 1.0) / den_p * (eps * a * a * b * b - kb * kb * kk * kk / (a * a))
        + 2.0 * eps * (wp.kappa + wp.kappa_bar) / den_p * kb * kk
        + eps * kb * q * q
        + kb * kb * (wp.kappa - wp.kappa_bar);
    2.0 * (eps - 1.0) / (eps * w.kappa + kb).powi(2) * bracket
}

/// B(k,k'), B(k',k) and the normalized (B2n_11, B2n_22)(k,k;k') for any
/// permittivity including the ζ = 0 Drude and ideal-metal limits.
#[derive(Debug, Clone, Copy)]
pub struct ScatteringCoefficients {
    pub forward: PolarizationMatrix,
    pub backward: PolarizationMatrix,
    pub second: [f64; 2],
}

pub fn scattering_coefficients(
    eps: Permittivity,
    q: f64,
    k: Vec2,
    kp: Vec2,
) -> ScatteringCoefficients {
    let a = norm(k);
    let b = norm(kp);
    let kk = dot(k, kp);
    let c = kk / (a * b);
    let s = cross(k, kp) / (a * b);
    let kap = (q * q + a * a).sqrt();
    let kapp = (q * q + b * b).sqrt();
    match eps {
        Permittivity::Finite(e) => {
            let kb = (e * q * q + a * a).sqrt();
            let kbp = (e * q * q + b * b).sqrt();
            let sq = (e - 1.0).sqrt();
            let d = [sq * kb / (e * kap + kb), sq * q / (kap + kb)];
            let dp = [sq * kbp / (e * kapp + kbp), sq * q / (kapp + kbp)];
            let m11 = c + e * a * b / (kb * kbp);
            let forward = [
                [d[0] * m11 * dp[0], d[0] * s * dp[1]],
                [d[1] * s * dp[0], -d[1] * c * dp[1]],
            ];
            // B(k',k): same M11, sin changes sign
            let backward = [
                [dp[0] * m11 * d[0], -dp[0] * s * d[1]],
                [-dp[1] * s * d[0], -dp[1] * c * d[1]],
            ];
            let w = Kin {
                q,
                kappa: kap,
                kappa_bar: kb,
            };
            let wp = Kin {
                q,
                kappa: kapp,
                kappa_bar: kbp,
            };
            let b11 = b2n_tm_finite(e, q, a, b, kk, &w, &wp);
            let te_bracket = (e - 1.0) / (e * kapp + kbp) * (kk * kk / (a * a) - b * b) + kb - kbp + kapp;
            let b22 = -2.0 * (e - 1.0) * q * q / (kap + kb).powi(2) * te_bracket;
            ScatteringCoefficients {
                forward,
                backward,
                second: [b11, b22],
            }
        }
        Permittivity::Divergent => ScatteringCoefficients {
            forward: [[1.0, 0.0], [0.0, 0.0]],
            backward: [[1.0, 0.0], [0.0, 0.0]],
            second: [2.0 * b, 0.0],
        },
        Permittivity::Perfect => {
            let m11 = (q * q * c + a * b) / (kap * kapp);
            let sin2 = s * s;
            ScatteringCoefficients {
                forward: [[m11, q * s / kap], [q * s / kapp, -c]],
                backward: [[m11, -q * s / kapp], [-q * s / kap, -c]],
                second: [
                    2.0 * (a * a * b * b + 2.0 * q * q * kk + q.powi(4) + q * q * b * b * sin2)
                        / (kap * kap * kapp),
                    -2.0 * (kapp * kapp - b * b * sin2) / kapp,
                ],
            }
        }
    }
}

/// Sign of r² e^{−2Hκ} in the round-trip denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// 1 + r² e^{−2Hκ}, as printed
    Plus,
    /// 1 − r² e^{−2Hκ}, multiple-reflection series
    Minus,
}

/// Overall orientation of the assembled kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assembly {
    /// f = 2 Σ ρρ'BB − Σ ρ B2 with B2 in the printed TE sign convention.
    AsPrinted,
    /// Opposite sign; G̃(0) = U''/2 so α multiplies (∇H)² with the energy's sign.
    EnergyNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConvention {
    pub denominator: Denominator,
    pub assembly: Assembly,
}

impl Default for KernelConvention {
    fn default() -> Self {
        KernelConvention {
            denominator: Denominator::Minus,
            assembly: Assembly::AsPrinted,
        }
    }
}

/// f^{s1} + f^{s2} at one frequency, integration vector k and k' = k + Q.
#[allow(clippy::needless_range_loop)]
pub fn kernel_integrand(
    eps: Permittivity,
    q: f64,
    h: f64,
    k: Vec2,
    kp: Vec2,
    conv: KernelConvention,
) -> f64 {
    let a = norm(k);
    let b = norm(kp);
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let kap = (q * q + a * a).sqrt();
    let kapp = (q * q + b * b).sqrt();
    let (r1, r2) = fresnel_pair(eps, q, a, kap);
    let (rp1, rp2) = fresnel_pair(eps, q, b, kapp);
    let e = (-2.0 * h * kap).exp();
    let ep = (-2.0 * h * kapp).exp();
    let sg = match conv.denominator {
        Denominator::Plus => 1.0,
        Denominator::Minus => -1.0,
    };
    let rho = |kappa: f64, r: f64, e: f64| kappa * r * e / (1.0 + sg * r * r * e);
    let p = [rho(kap, r1, e), rho(kap, r2, e)];
    let pp = [rho(kapp, rp1, ep), rho(kapp, rp2, ep)];
    let sc = scattering_coefficients(eps, q, k, kp);
    let mut s1 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s1 += p[i] * pp[j] * sc.forward[i][j] * sc.backward[j][i];
        }
    }
    let s2 = p[0] * sc.second[0] + p[1] * sc.second[1];
    let f = 2.0 * s1 + s2;
    match conv.assembly {
        Assembly::AsPrinted => f,
        Assembly::EnergyNormalized => -f,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// breakpoints of x = 2H(κ − ζ/c) for the radial panels
    pub radial_breaks: [f64; 6],
    pub radial_nodes_per_panel: usize,
    pub angular_nodes: usize,
    /// polar nodes of the T = 0 frequency–wavenumber quarter plane
    pub polar_nodes: usize,
    /// step of the pointwise stencil relative to |k|
    pub rel_step: f64,
    pub matsubara_tol: f64,
    /// maximum |α_R − α_{h/2}| / |α_R| accepted by the Richardson ratio test
    pub richardson_tol: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            radial_breaks: [0.0, 0.5, 2.0, 6.0, 14.0, 44.0],
            radial_nodes_per_panel: 8,
            angular_nodes: 32,
            polar_nodes: 24,
            rel_step: 1e-2,
            matsubara_tol: 1e-8,
            richardson_tol: 1e-3,
        }
    }
}

/// Nodes (κ, weight of κ dκ) for one frequency.
fn radial_nodes(q: f64, h: f64, opts: &KernelOptions) -> Vec<(f64, f64)> {
    let rule = PanelRule::new(&opts.radial_breaks, opts.radial_nodes_per_panel);
    let s = 1.0 / (2.0 * h);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| {
            let kappa = q + x * s;
            (kappa, w * s * kappa)
        })
        .collect()
}

fn angles(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|j| {
            let phi = (j as f64 + 0.5) * 2.0 * PI / n as f64;
            (phi, 2.0 * PI / n as f64)
        })
        .collect()
}

/// Matsubara cutoff for integrands decaying like κ³ e^{−2Hκ}.
fn kernel_matsubara_nmax(t: f64, h: f64, tol: f64) -> Result<usize> {
    let g = matsubara_grid(t, tol, h)?;
    let a = 2.0 * h * g.spacing() / PhysicalConstants::C;
    let mut n = g.n_max;
    loop {
        let x = a * n as f64;
        if (1.0 + x + x * x / 2.0 + x * x * x / 6.0) * (-x).exp() / (1.0 - (-a).exp()) < 0.5 * tol {
            return Ok(n);
        }
        n += 1;
    }
}

/// Sum over frequencies (finite T) or the quarter-plane integral (T = 0) of
/// `∫ d²k/(2π)² g(eps, q, k)` for N integrands at once.
fn frequency_integral<const N: usize, G>(
    model: &MaterialModel,
    t: f64,
    h: f64,
    opts: &KernelOptions,
    g: G,
) -> Result<[f64; N]>
where
    G: Fn(Permittivity, f64, Vec2) -> [f64; N] + Sync,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("separation {h} must be > 0")));
    }
    let phis = angles(opts.angular_nodes);
    let norm2 = 1.0 / (4.0 * PI * PI);
    let add = |acc: &mut [f64; N], w: f64, v: [f64; N]| {
        for i in 0..N {
            acc[i] += w * v[i];
        }
    };
    let (terms, prefactor): (Vec<[f64; N]>, f64) = if t > 0.0 {
        let n_max = kernel_matsubara_nmax(t, h, opts.matsubara_tol)?;
        let spacing = 2.0 * PI * PhysicalConstants::K_B * t / PhysicalConstants::HBAR;
        let terms = (0..=n_max)
            .into_par_iter()
            .map(|n| {
                let zeta = n as f64 * spacing;
                let q = zeta / PhysicalConstants::C;
                let eps = model.response(zeta);
                let weight = if n == 0 { 0.5 } else { 1.0 };
                let mut acc = [0.0; N];
                for (kappa, wk) in radial_nodes(q, h, opts) {
                    let k = (kappa * kappa - q * q).max(0.0).sqrt();
                    for (phi, wp) in &phis {
                        let (sn, cs) = phi.sin_cos();
                        add(&mut acc, weight * wk * wp, g(eps, q, [k * cs, k * sn]));
                    }
                }
                acc
            })
            .collect();
        (terms, PhysicalConstants::K_B * t)
    } else if t == 0.0 {
        // dq d²k = ρ² sin θ dρ dθ dφ with κ = ρ, q = ρ cos θ, k = ρ sin θ
        let (tn, tw) = gauss_legendre(opts.polar_nodes);
        let polar: Vec<(f64, f64)> = tn
            .iter()
            .zip(&tw)
            .map(|(x, w)| (0.25 * PI * (x + 1.0), 0.25 * PI * w))
            .collect();
        let radial = radial_nodes(0.0, h, opts);
        let terms = polar
            .par_iter()
            .map(|(theta, wt)| {
                let (st, ct) = theta.sin_cos();
                let mut acc = [0.0; N];
                for (rho, wr) in &radial {
                    // wr carries ρ dρ
                    let q = rho * ct;
                    let k = rho * st;
                    let eps = model.response(q * PhysicalConstants::C);
                    for (phi, wp) in &phis {
                        let (sn, cs) = phi.sin_cos();
                        add(&mut acc, wr * rho * st * wt * wp, g(eps, q, [k * cs, k * sn]));
                    }
                }
                acc
            })
            .collect();
        (terms, PhysicalConstants::HBAR * PhysicalConstants::C / (2.0 * PI))
    } else {
        return Err(Error::Domain(format!("temperature {t} must be >= 0")));
    };
    let mut total = [0.0; N];
    for v in &terms {
        add(&mut total, 1.0, *v);
    }
    Ok(total.map(|v| v * prefactor * norm2))
}

/// G̃(Q) = k_BT Σ' ∫ d²k/(2π)² f(ζ, k, k + Q).
pub fn kernel_g(
    model: &MaterialModel,
    t: f64,
    h: f64,
    q_vec: Vec2,
    conv: KernelConvention,
    opts: &KernelOptions,
) -> Result<f64> {
    let [g] = frequency_integral(model, t, h, opts, |eps, q, k| {
        [kernel_integrand(eps, q, h, k, [k[0] + q_vec[0], k[1] + q_vec[1]], conv)]
    })?;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPoint {
    pub h: f64,
    pub alpha: f64,
    /// |α_R − α_{h/2}| from the Richardson step
    pub error_estimate: f64,
}

/// α(H) = ½ ∂²G̃/∂Q_x² at Q = 0, differentiated under the integral.
///
/// Each integration node uses a five-point stencil with step `rel_step·|k|`
/// and its half, combined by Richardson extrapolation. G̃(Q) carries an |Q|³
/// term so a global stencil on G̃ would only converge linearly in the step.
pub fn alpha(
    model: &MaterialModel,
    t: f64,
    h: f64,
    conv: KernelConvention,
    opts: &KernelOptions,
) -> Result<AlphaPoint> {
    alpha_along(model, t, h, [1.0, 0.0], conv, opts)
}

/// Second derivative along the unit direction `dir`.
pub fn alpha_along(
    model: &MaterialModel,
    t: f64,
    h: f64,
    dir: Vec2,
    conv: KernelConvention,
    opts: &KernelOptions,
) -> Result<AlphaPoint> {
    let rel = opts.rel_step;
    let pair = |eps: Permittivity, q: f64, k: Vec2| -> [f64; 2] {
        let step = rel * norm(k);
        let f = |d: f64| kernel_integrand(eps, q, h, k, [k[0] + d * dir[0], k[1] + d * dir[1]], conv);
        let f0 = f(0.0);
        let d2 = |s: f64| (-f(2.0 * s) + 16.0 * f(s) - 30.0 * f0 + 16.0 * f(-s) - f(-2.0 * s)) / (12.0 * s * s);
        [d2(step), d2(0.5 * step)]
    };
    let [coarse, fine] = frequency_integral(model, t, h, opts, pair)?;
    let extrap = (16.0 * fine - coarse) / 15.0;
    let err = (extrap - fine).abs();
    if err > opts.richardson_tol * extrap.abs() && err > 0.0 {
        return Err(Error::Accuracy(format!(
            "Richardson ratio test failed at H = {h:e}: coarse {coarse:e}, fine {fine:e}"
        )));
    }
    Ok(AlphaPoint {
        h,
        alpha: 0.5 * extrap,
        error_estimate: 0.5 * err,
    })
}
