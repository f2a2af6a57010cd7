//! Field solve of the θ = 0 electrostatic problem on one period: bilinear
//! isoparametric elements on a boundary-fitted mesh of the gap, periodic in x.

use crate::corrugation::CorrugationGeometry;
use crate::error::{Error, Result};
use crate::material::PhysicalConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// cells per period along x
    pub nx: usize,
    /// cells across the gap
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 128, ny: 32 }
    }
}

impl GridSpec {
    pub fn refined(self) -> Self {
        GridSpec {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
        }
    }
}

pub const MIN_GAP_CELLS: usize = 20;
pub const MIN_PERIOD_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceSolution {
    /// J/m²
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

struct Mesh {
    nx: usize,
    ny: usize,
    dx: f64,
    lo: Vec<f64>,
    gap: Vec<f64>,
}

impl Mesh {
    fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let ii = i % self.nx;
        let x = i as f64 * self.dx;
        (x, self.lo[ii] + self.gap[ii] * j as f64 / self.ny as f64)
    }
}

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
// local node order: (0,0), (1,0), (1,1), (0,1)
const LOCAL: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn element_stiffness(xy: &[(f64, f64); 4]) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for &xi in &GAUSS {
        for &eta in &GAUSS {
            let mut dn = [[0.0; 2]; 4];
            for (a, (sa, ta)) in LOCAL.iter().enumerate() {
                dn[a] = [0.25 * sa * (1.0 + ta * eta), 0.25 * ta * (1.0 + sa * xi)];
            }
            let mut jac = [[0.0; 2]; 2];
            for a in 0..4 {
                jac[0][0] += dn[a][0] * xy[a].0;
                jac[0][1] += dn[a][0] * xy[a].1;
                jac[1][0] += dn[a][1] * xy[a].0;
                jac[1][1] += dn[a][1] * xy[a].1;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            let inv = [
                [jac[1][1] / det, -jac[0][1] / det],
                [-jac[1][0] / det, jac[0][0] / det],
            ];
            let mut g = [[0.0; 2]; 4];
            for a in 0..4 {
                g[a] = [
                    inv[0][0] * dn[a][0] + inv[0][1] * dn[a][1],
                    inv[1][0] * dn[a][0] + inv[1][1] * dn[a][1],
                ];
            }
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += (g[a][0] * g[b][0] + g[a][1] * g[b][1]) * det;
                }
            }
        }
    }
    k
}

/// Energy per area for Φ = 0 on the plate and Φ = V on the sphere surface,
/// lower surface −h₁(x), upper surface z − h₂(x).
pub fn laplace_solve(geom: &CorrugationGeometry, z: f64, v: f64, grid: GridSpec) -> Result<LaplaceSolution> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("separation {z} must be > 0")));
    }
    if grid.ny < MIN_GAP_CELLS || grid.nx < MIN_PERIOD_CELLS {
        return Err(Error::Accuracy(format!(
            "grid {}x{} under-resolves the gap (need >= {} cells across and >= {} per period)",
            grid.nx, grid.ny, MIN_GAP_CELLS, MIN_PERIOD_CELLS
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let dx = geom.period / nx as f64;
    let mut lo = Vec::with_capacity(nx);
    let mut gap = Vec::with_capacity(nx);
    for i in 0..nx {
        let x = i as f64 * dx;
        let p = geom.profiles(x, 0.0);
        let g = z + p.h1 - p.h2;
        if !(g > 0.0) {
            return Err(Error::Contact {
                h_nm: g * 1e9,
                x_nm: x * 1e9,
                y_nm: 0.0,
            });
        }
        lo.push(-p.h1);
        gap.push(g);
    }
    let mesh = Mesh { nx, ny, dx, lo, gap };

    // unknowns on rows j = 1..ny-1; 9-point stencil per row
    let n = nx * (ny - 1);
    let idx = |i: usize, j: usize| (j - 1) * nx + (i % nx);
    let mut a = vec![[0.0f64; 9]; n];
    let mut rhs = vec![0.0; n];
    let slot = |di: isize, dj: isize| ((dj + 1) * 3 + (di + 1)) as usize;
    let elems = |i: usize, j: usize| -> ([(usize, usize); 4], [[f64; 4]; 4]) {
        let ids = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
        let xy = ids.map(|(a, b)| mesh.node(a, b));
        (ids, element_stiffness(&xy))
    };
    for j in 0..ny {
        for i in 0..nx {
            let (ids, ke) = elems(i, j);
            for (p, &(ip, jp)) in ids.iter().enumerate() {
                if jp == 0 || jp == ny {
                    continue;
                }
                let row = idx(ip, jp);
                for (q, &(iq, jq)) in ids.iter().enumerate() {
                    if jq == 0 {
                        continue;
                    }
                    if jq == ny {
                        rhs[row] -= ke[p][q] * v;
                        continue;
                    }
                    let di = iq as isize - ip as isize;
                    let dj = jq as isize - jp as isize;
                    a[row][slot(di, dj)] += ke[p][q];
                }
            }
        }
    }
    let neighbor = |row: usize, s: usize| -> Option<usize> {
        let i = row % nx;
        let j = row / nx + 1;
        let di = s as isize % 3 - 1;
        let dj = s as isize / 3 - 1;
        let jj = j as isize + dj;
        if jj < 1 || jj > ny as isize - 1 {
            return None;
        }
        let ii = (i as isize + di).rem_euclid(nx as isize) as usize;
        Some(idx(ii, jj as usize))
    };
    let apply = |x: &[f64], y: &mut [f64]| {
        for row in 0..n {
            let mut s = 0.0;
            for (k, coef) in a[row].iter().enumerate() {
                if *coef != 0.0 {
                    if let Some(c) = neighbor(row, k) {
                        s += coef * x[c];
                    }
                }
            }
            y[row] = s;
        }
    };

    // Jacobi-preconditioned conjugate gradients
    let diag: Vec<f64> = a.iter().map(|r| r[4]).collect();
    let mut x: Vec<f64> = (0..n).map(|row| v * ((row / nx + 1) as f64 / ny as f64)).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut zv: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = zv.clone();
    let mut rz: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n.max(100);
    let tol = 1e-11;
    let mut iterations = 0;
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::Solver(format!(
                "conjugate gradients stalled at relative residual {res:.3e} after {iterations} iterations"
            )));
        }
        apply(&p, &mut ax);
        let pap: f64 = p.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ax[k];
        }
        for k in 0..n {
            zv[k] = r[k] / diag[k];
        }
        let rz_new: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = zv[k] + beta * p[k];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        iterations += 1;
    }

    let phi = |i: usize, j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == ny {
            v
        } else {
            x[idx(i, j)]
        }
    };
    let mut w = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let (ids, ke) = elems(i, j);
            let u = ids.map(|(a, b)| phi(a, b));
            for p in 0..4 {
                for q in 0..4 {
                    w += u[p] * ke[p][q] * u[q];
                }
            }
        }
    }
    Ok(LaplaceSolution {
        energy: 0.5 * PhysicalConstants::EPS0 * w / geom.period,
        iterations,
        residual: res,
    })
}
