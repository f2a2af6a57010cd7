use crate::corrugation::CorrugationGeometry;
use crate::electrostatics::x_of_z;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Value with its one-standard-deviation error.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Interval half-width for a coverage factor such as the Student t quantile.
    pub fn half_width(&self, factor: f64) -> f64 {
        factor * self.std_error
    }

    pub fn covers(&self, truth: f64, factor: f64) -> bool {
        (self.value - truth).abs() <= self.half_width(factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolaFit {
    pub v0: Estimate,
    /// curvature β = X/σ′
    pub beta: Estimate,
    /// vertex ordinate, the Casimir part of the signal
    pub vertex: Estimate,
    /// linear coefficient about the mean voltage `centre`
    pub slope: Estimate,
    pub centre: f64,
}

/// Least-squares S = β(V − V₀)² + c. Without `sigma` the covariance is
/// scaled by the residual variance.
pub fn fit_parabola(signal: &[f64], voltages: &[f64], sigma: Option<&[f64]>) -> Result<ParabolaFit> {
    if signal.len() != voltages.len() {
        return Err(Error::Fit(format!(
            "{} signals for {} voltages",
            signal.len(),
            voltages.len()
        )));
    }
    let mut distinct: Vec<f64> = voltages.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "parabola needs at least 3 distinct voltages, got {}",
            distinct.len()
        )));
    }
    // centre the voltages for conditioning
    let vc = voltages.iter().sum::<f64>() / voltages.len() as f64;
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for (i, (&s, &v)) in signal.iter().zip(voltages).enumerate() {
        let w = match sigma {
            Some(sg) if sg[i] > 0.0 => 1.0 / (sg[i] * sg[i]),
            _ => 1.0,
        };
        let u = v - vc;
        let row = Vector3::new(u * u, u, 1.0);
        ata += w * row * row.transpose();
        aty += w * s * row;
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Fit("singular parabola normal equations".into()))?;
    let p = chol.solve(&aty);
    let mut cov = chol.inverse();
    let weighted = sigma.is_some_and(|sg| sg.iter().all(|s| *s > 0.0));
    if !weighted {
        let n = signal.len();
        let rss: f64 = signal
            .iter()
            .zip(voltages)
            .map(|(s, v)| {
                let u = v - vc;
                let r = s - (p[0] * u * u + p[1] * u + p[2]);
                r * r
            })
            .sum();
        let s2 = if n > 3 { rss / (n - 3) as f64 } else { 0.0 };
        cov *= s2;
    }
    let (a, b, c) = (p[0], p[1], p[2]);
    let scale = signal.iter().map(|s| s.abs()).fold(0.0, f64::max).max(1e-300);
    if a.abs() <= 1e-12 * scale {
        return Err(Error::Fit("zero curvature: V0 undefined for a voltage-independent signal".into()));
    }
    if a < 0.0 {
        return Err(Error::Fit(format!(
            "negative curvature {a:.4e}: the signal sign convention is inverted"
        )));
    }
    let v0 = vc - b / (2.0 * a);
    let vertex = c - b * b / (4.0 * a);
    let g_v0 = Vector3::new(b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0);
    let g_vx = Vector3::new(b * b / (4.0 * a * a), -b / (2.0 * a), 1.0);
    let var = |g: &Vector3<f64>| (g.transpose() * cov * g)[0].max(0.0).sqrt();
    Ok(ParabolaFit {
        v0: Estimate {
            value: v0,
            std_error: var(&g_v0),
        },
        beta: Estimate {
            value: a,
            std_error: cov[(0, 0)].max(0.0).sqrt(),
        },
        vertex: Estimate {
            value: vertex,
            std_error: var(&g_vx),
        },
        slope: Estimate {
            value: b,
            std_error: cov[(1, 1)].max(0.0).sqrt(),
        },
        centre: vc,
    })
}

/// β at relative separation z_rel = z − z₀ (m), with its error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSample {
    pub z_rel: f64,
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BetaFitOptions {
    /// search interval for z₀ (m)
    pub z0_bounds: (f64, f64),
    pub scan_points: usize,
    /// adds a + b·z_rel to the model. Per-curve drift-line errors reach β(z)
    /// as exactly such a line, since β at each z is a fixed linear
    /// combination of the curves.
    pub linear_background: bool,
}

impl Default for BetaFitOptions {
    fn default() -> Self {
        BetaFitOptions {
            z0_bounds: (1e-9, 1e-6),
            scan_points: 200,
            linear_background: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaFit {
    /// σ′ in N per signal unit
    pub sigma: Estimate,
    pub z0: Estimate,
    pub correlation: f64,
    pub chi2: f64,
    pub dof: usize,
    /// covariance inflation from residual autocorrelation and χ²/dof
    pub inflation: f64,
    /// (a, b) of the linear background, zero when not fitted
    pub background: (f64, f64),
}

impl BetaFit {
    /// Fitted β at z_rel, background included.
    pub fn model(&self, geom: &CorrugationGeometry, z_rel: f64) -> Result<f64> {
        Ok(x_of_z(geom, z_rel + self.z0.value)? / self.sigma.value
            + self.background.0
            + self.background.1 * z_rel)
    }
}

/// Variance inflation (1 + ρ)/(1 − ρ) for lag-one autocorrelation ρ.
pub(crate) fn ar1_inflation(r: &[f64]) -> f64 {
    let ss: f64 = r.iter().map(|v| v * v).sum();
    if r.len() < 3 || ss == 0.0 {
        return 1.0;
    }
    let rho = (r.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / ss).clamp(-0.95, 0.95);
    ((1.0 + rho) / (1.0 - rho)).max(1.0)
}

/// Weighted linear least squares on the given columns; returns the
/// coefficients and χ².
fn linear_solve(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = cols.len();
    let a = DMatrix::from_fn(k, k, |i, j| (0..y.len()).map(|n| w[n] * cols[i][n] * cols[j][n]).sum());
    let b = DVector::from_fn(k, |i, _| (0..y.len()).map(|n| w[n] * cols[i][n] * y[n]).sum());
    let c = a
        .cholesky()
        .ok_or_else(|| Error::Fit("singular normal matrix in the beta fit".into()))?
        .solve(&b);
    let chi2 = (0..y.len())
        .map(|n| {
            let m: f64 = (0..k).map(|i| c[i] * cols[i][n]).sum();
            w[n] * (y[n] - m).powi(2)
        })
        .sum();
    Ok((c.iter().copied().collect(), chi2))
}

/// χ² fit of β(z_rel) by X(z_rel + z₀)/σ′ over (σ′, z₀), optionally plus a
/// linear background.
pub fn fit_beta_curve(
    samples: &[BetaSample],
    geom: &CorrugationGeometry,
    opts: &BetaFitOptions,
) -> Result<BetaFit> {
    let npar = if opts.linear_background { 4 } else { 2 };
    if samples.len() < npar + 1 {
        return Err(Error::Fit(format!(
            "{} beta samples, need at least {}",
            samples.len(),
            npar + 1
        )));
    }
    let weighted = samples.iter().all(|s| s.sigma > 0.0);
    let w: Vec<f64> = samples
        .iter()
        .map(|s| if weighted { 1.0 / (s.sigma * s.sigma) } else { 1.0 })
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.beta).collect();
    let zmin = samples.iter().map(|s| s.z_rel).fold(f64::INFINITY, f64::min);
    let lo = opts.z0_bounds.0.max(-zmin + 1e-10);
    let hi = opts.z0_bounds.1;
    if !(hi > lo) {
        return Err(Error::Fit("empty z0 search interval".into()));
    }
    // background columns scaled to O(1)
    let zs = samples.iter().map(|s| s.z_rel.abs()).fold(0.0, f64::max).max(1e-9);
    let background: Vec<Vec<f64>> = if opts.linear_background {
        vec![vec![1.0; samples.len()], samples.iter().map(|s| s.z_rel / zs).collect()]
    } else {
        Vec::new()
    };
    let xs = |z0: f64| -> Result<Vec<f64>> {
        samples.iter().map(|s| x_of_z(geom, s.z_rel + z0)).collect()
    };
    // linear parameters (1/σ′ and the background) are profiled out
    let profile = |z0: f64| -> Result<(Vec<f64>, f64)> {
        let mut cols = vec![xs(z0)?];
        cols.extend(background.iter().cloned());
        linear_solve(&cols, &y, &w)
    };
    let n = opts.scan_points.max(8);
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64).powi(2))
        .collect();
    let mut best = (0, f64::INFINITY);
    for (i, &z0) in grid.iter().enumerate() {
        let c = profile(z0)?.1;
        if c < best.1 {
            best = (i, c);
        }
    }
    let mut a = grid[best.0.saturating_sub(1)];
    let mut b = grid[(best.0 + 1).min(n - 1)];
    // golden section
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = profile(c)?.1;
    let mut fd = profile(d)?.1;
    for _ in 0..200 {
        if (b - a).abs() < 1e-16 + 1e-12 * a.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile(c)?.1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile(d)?.1;
        }
    }
    let z0 = 0.5 * (a + b);
    if z0 - lo < 1e-3 * (hi - lo) || hi - z0 < 1e-3 * (hi - lo) {
        return Err(Error::Fit(format!(
            "z0 = {:.3} nm sits on the search boundary [{:.1}, {:.1}] nm",
            z0 * 1e9,
            lo * 1e9,
            hi * 1e9
        )));
    }
    let (coef, chi2) = profile(z0)?;
    let p = coef[0];
    if !(p > 0.0) {
        return Err(Error::Fit(format!("non-positive 1/sigma' = {p:e}")));
    }

    // covariance of (p, background…, z₀) from the Jacobian at the optimum
    let x = xs(z0)?;
    let dz = 1e-4 * z0.abs().max(1e-9);
    let xp = xs(z0 + dz)?;
    let xm = xs(z0 - dz)?;
    let mut jtj = DMatrix::<f64>::zeros(npar, npar);
    let mut resid = Vec::with_capacity(samples.len());
    for i in 0..samples.len() {
        let mut j = DVector::<f64>::zeros(npar);
        j[0] = x[i];
        let mut model = p * x[i];
        for (k, col) in background.iter().enumerate() {
            j[1 + k] = col[i];
            model += coef[1 + k] * col[i];
        }
        j[npar - 1] = p * (xp[i] - xm[i]) / (2.0 * dz);
        jtj += w[i] * &j * j.transpose();
        resid.push(w[i].sqrt() * (y[i] - model));
    }
    let dof = samples.len() - npar;
    let chi2_red = chi2 / dof.max(1) as f64;
    let inflation = if weighted {
        ar1_inflation(&resid) * chi2_red.max(1.0)
    } else {
        ar1_inflation(&resid) * chi2_red
    };
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular (sigma', z0) normal matrix".into()))?
        * inflation;
    let iz = npar - 1;
    let sp = cov[(0, 0)].max(0.0).sqrt();
    let sz = cov[(iz, iz)].max(0.0).sqrt();
    let corr = if sp > 0.0 && sz > 0.0 {
        // σ′ = 1/p flips the sign of the correlation
        -cov[(0, iz)] / (sp * sz)
    } else {
        0.0
    };
    Ok(BetaFit {
        sigma: Estimate {
            value: 1.0 / p,
            std_error: sp / (p * p),
        },
        z0: Estimate {
            value: z0,
            std_error: sz,
        },
        correlation: corr,
        chi2,
        dof,
        inflation,
        background: if opts.linear_background {
            (coef[1], coef[2] / zs)
        } else {
            (0.0, 0.0)
        },
    })
}

/// 13 end points from `z_end_max` down: three 100 nm steps, then 50 nm steps.
pub fn endpoint_grid(z_end_max: f64) -> Vec<f64> {
    let mut out = vec![z_end_max];
    let mut z = z_end_max;
    for i in 0..12 {
        z -= if i < 3 { 100e-9 } else { 50e-9 };
        out.push(z);
    }
    out
}

#[derive(Debug)]
pub struct EndpointFit {
    pub z_end: f64,
    pub fit: Result<BetaFit>,
}

/// Refits with samples truncated at z_rel + z₀_ref ≤ z_end for each end point.
pub fn endpoint_scan(
    samples: &[BetaSample],
    geom: &CorrugationGeometry,
    z0_ref: f64,
    endpoints: &[f64],
    opts: &BetaFitOptions,
) -> Vec<EndpointFit> {
    endpoints
        .iter()
        .map(|&z_end| {
            let sub: Vec<BetaSample> = samples
                .iter()
                .filter(|s| s.z_rel + z0_ref <= z_end)
                .copied()
                .collect();
            EndpointFit {
                z_end,
                fit: fit_beta_curve(&sub, geom, opts),
            }
        })
        .collect()
}

/// True when every successful end-point fit stays within `k` of its own
/// standard errors of the reference, and no fit failed.
pub fn endpoint_constant(scan: &[EndpointFit], reference: &BetaFit, k: f64) -> bool {
    scan.iter().all(|e| match &e.fit {
        Ok(f) => {
            (f.sigma.value - reference.sigma.value).abs() <= k * f.sigma.std_error.max(1e-300)
                && (f.z0.value - reference.z0.value).abs() <= k * f.z0.std_error.max(1e-300)
        }
        Err(_) => false,
    })
}

/// Weighted mean with autocorrelation-inflated error, and the weighted
/// slope against `x` (for the V₀(z) flatness check).
pub fn weighted_mean_and_slope(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<(Estimate, Estimate)> {
    if x.len() < 3 {
        return Err(Error::Fit("need at least 3 points for a weighted mean and slope".into()));
    }
    let weighted = sigma.iter().all(|s| *s > 0.0);
    let w: Vec<f64> = sigma
        .iter()
        .map(|s| if weighted { 1.0 / (s * s) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let r: Vec<f64> = y.iter().zip(&w).map(|(y, w)| (y - mean) * w.sqrt()).collect();
    let chi2: f64 = r.iter().map(|v| v * v).sum();
    let dof = (x.len() - 1) as f64;
    let infl = ar1_inflation(&r) * if weighted { (chi2 / dof).max(1.0) } else { chi2 / dof };
    let mean_se = (infl / sw).sqrt();

    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - mx) * (y - mean)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let slope_se = if sxx > 0.0 { (infl / sxx).sqrt() } else { f64::INFINITY };
    Ok((
        Estimate {
            value: mean,
            std_error: mean_se,
        },
        Estimate {
            value: slope,
            std_error: slope_se,
        },
    ))
}

/// V₀ from per-point vertices v_i = c_i − b_i/(2β_i) when the linear
/// coefficients b_i carry a line p + q·z (drift residuals): fits
/// v_i = V₀ + (p + q·z_i)/β_i by weighted least squares.
pub fn vertex_with_background(z: &[f64], v: &[f64], sigma: &[f64], beta: &[f64]) -> Result<Estimate> {
    let n = z.len();
    if n < 4 {
        return Err(Error::Fit("need at least 4 points to profile a line out of the vertices".into()));
    }
    let weighted = sigma.iter().all(|s| *s > 0.0);
    let scale = z.iter().fold(0.0f64, |m, z| m.max(z.abs())).max(f64::MIN_POSITIVE);
    let mut a = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let w = if weighted { 1.0 / sigma[i] } else { 1.0 };
        a[(i, 0)] = w;
        a[(i, 1)] = w / beta[i];
        a[(i, 2)] = w * z[i] / scale / beta[i];
        y[i] = w * v[i];
    }
    let ata = a.transpose() * &a;
    let cov = ata
        .try_inverse()
        .ok_or_else(|| Error::Fit("vertex background fit is singular".into()))?;
    let p = &cov * (a.transpose() * &y);
    let r: Vec<f64> = (&y - &a * &p).iter().copied().collect();
    let chi2: f64 = r.iter().map(|v| v * v).sum();
    let dof = (n - 3) as f64;
    let infl = ar1_inflation(&r) * if weighted { (chi2 / dof).max(1.0) } else { chi2 / dof };
    Ok(Estimate {
        value: p[0],
        std_error: (infl * cov[(0, 0)]).sqrt(),
    })
}
