//! Cached U(H), U'(H) and α(H) on a logarithmic H-grid.

use crate::error::{Error, Result};
use crate::kernel::{alpha, KernelConvention, KernelOptions};
use crate::lifshitz::{plate_energy_derivative_with, plate_energy_with, LifshitzOptions};
use crate::material::MaterialModel;
use crate::spline::CubicSpline;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub nodes: usize,
    pub lifshitz: LifshitzOptions,
    pub kernel: KernelOptions,
    pub convention: KernelConvention,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            nodes: 400,
            lifshitz: LifshitzOptions::default(),
            kernel: KernelOptions::default(),
            convention: KernelConvention::default(),
        }
    }
}

/// Raw samples; the serialized form of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateSamples {
    pub temperature: f64,
    pub convention: KernelConvention,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateValues {
    pub u: f64,
    pub du: f64,
    pub alpha: f64,
}

/// Interpolates U·H³, U'·H⁴ and α·H³ against ln H with natural cubic splines.
#[derive(Debug, Clone)]
pub struct PlateFunctionTable {
    samples: PlateSamples,
    su: CubicSpline,
    sdu: CubicSpline,
    salpha: CubicSpline,
}

impl PlateFunctionTable {
    pub fn build(
        model: &MaterialModel,
        t: f64,
        h_min: f64,
        h_max: f64,
        opts: &TableOptions,
    ) -> Result<Self> {
        if !(h_min > 0.0 && h_max > h_min) {
            return Err(Error::Domain(format!("bad table range [{h_min:e}, {h_max:e}]")));
        }
        if opts.nodes < 4 {
            return Err(Error::Domain("table needs at least 4 nodes".into()));
        }
        let n = opts.nodes;
        let (l0, l1) = (h_min.ln(), h_max.ln());
        let h: Vec<f64> = (0..n)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
            .collect();
        let rows: Vec<Result<(f64, f64, f64)>> = h
            .par_iter()
            .map(|&hh| {
                let u = plate_energy_with(model, t, hh, &opts.lifshitz)?;
                let du = plate_energy_derivative_with(model, t, hh, &opts.lifshitz)?;
                let a = alpha(model, t, hh, opts.convention, &opts.kernel)?;
                Ok((u, du, a.alpha))
            })
            .collect();
        let mut u = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        let mut al = Vec::with_capacity(n);
        for r in rows {
            let (a, b, c) = r?;
            u.push(a);
            du.push(b);
            al.push(c);
        }
        Self::from_samples(PlateSamples {
            temperature: t,
            convention: opts.convention,
            h,
            u,
            du,
            alpha: al,
        })
    }

    pub fn from_samples(samples: PlateSamples) -> Result<Self> {
        let n = samples.h.len();
        if samples.u.len() != n || samples.du.len() != n || samples.alpha.len() != n {
            return Err(Error::Data("table columns differ in length".into()));
        }
        let x: Vec<f64> = samples.h.iter().map(|h| h.ln()).collect();
        let scaled = |v: &[f64], p: i32| -> Vec<f64> {
            v.iter().zip(&samples.h).map(|(a, h)| a * h.powi(p)).collect()
        };
        let mk = |y: Vec<f64>| {
            CubicSpline::new(x.clone(), y)
                .ok_or_else(|| Error::Data("table H-grid must be increasing with >= 3 nodes".into()))
        };
        Ok(PlateFunctionTable {
            su: mk(scaled(&samples.u, 3))?,
            sdu: mk(scaled(&samples.du, 4))?,
            salpha: mk(scaled(&samples.alpha, 3))?,
            samples,
        })
    }

    pub fn samples(&self) -> &PlateSamples {
        &self.samples
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples.h[0], *self.samples.h.last().unwrap())
    }

    pub fn convention(&self) -> KernelConvention {
        self.samples.convention
    }

    pub fn temperature(&self) -> f64 {
        self.samples.temperature
    }

    pub fn values(&self, h: f64) -> Result<PlateValues> {
        let (a, b) = self.range();
        // allow rounding at the ends
        if !(h >= a * (1.0 - 1e-12) && h <= b * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "H = {:.4} nm outside table range [{:.4}, {:.4}] nm",
                h * 1e9,
                a * 1e9,
                b * 1e9
            )));
        }
        Ok(self.values_unchecked(h))
    }

    pub(crate) fn values_unchecked(&self, h: f64) -> PlateValues {
        let x = h.ln();
        let h3 = h * h * h;
        PlateValues {
            u: self.su.eval(x) / h3,
            du: self.sdu.eval(x) / (h3 * h),
            alpha: self.salpha.eval(x) / h3,
        }
    }

    /// Same table with α negated, i.e. the other kernel assembly.
    pub fn with_flipped_assembly(&self) -> Result<Self> {
        use crate::kernel::Assembly;
        let mut s = self.samples.clone();
        s.alpha.iter_mut().for_each(|a| *a = -*a);
        s.convention.assembly = match s.convention.assembly {
            Assembly::AsPrinted => Assembly::EnergyNormalized,
            Assembly::EnergyNormalized => Assembly::AsPrinted,
        };
        Self::from_samples(s)
    }
}
