//! Signature kernel evaluation via the Goursat PDE.
//!
//! The kernel of two piecewise-linear paths is the corner value u(T,T) of a
//! hyperbolic PDE whose driving coefficient on each grid cell is the second
//! mixed difference of the static-kernel Gram of the path values. The grid
//! refines each original segment into 2^dyadic_order pieces; the recursion
//! keeps only two rolling rows, so memory stays linear in the grid width.
//!
//! Intermediate values matter too: u(s,t) is the kernel of the paths
//! restricted to [0,s] x [0,t], which is exactly what the conditional-KME
//! machinery needs, so [`solve_goursat_grid`] exposes u at the original grid
//! nodes.

use crate::error::{Error, Result};
use crate::path::Path;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pointwise kernel applied to path values (time coordinate included as a
/// plain coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StaticKernel {
    Linear,
    Rbf { sigma: f64 },
}

impl StaticKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            StaticKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            StaticKernel::Rbf { sigma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

/// Finite-difference update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    FirstOrder,
    SecondOrder,
}

/// Grid configuration for the PDE solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoursatConfig {
    /// Each original segment is split into 2^dyadic_order pieces.
    pub dyadic_order: u32,
    pub scheme: Scheme,
}

impl Default for GoursatConfig {
    fn default() -> Self {
        Self {
            dyadic_order: 1,
            scheme: Scheme::SecondOrder,
        }
    }
}

impl GoursatConfig {
    // memory guard
    const MAX_DYADIC: u32 = 12;

    pub fn new(dyadic_order: u32, scheme: Scheme) -> Self {
        assert!(dyadic_order <= Self::MAX_DYADIC, "dyadic_order > 12");
        Self {
            dyadic_order,
            scheme,
        }
    }
}

/// Refined node values: each segment subdivided into 2^order linear pieces.
fn refine_values(p: &Path, order: u32) -> Vec<f64> {
    let d = p.dim();
    let sub = 1usize << order;
    let n_nodes = (p.len() - 1) * sub + 1;
    let mut out = Vec::with_capacity(n_nodes * d);
    for i in 0..p.len() - 1 {
        let a = p.row(i);
        let b = p.row(i + 1);
        for s in 0..sub {
            let w = s as f64 / sub as f64;
            for j in 0..d {
                out.push(a[j] + w * (b[j] - a[j]));
            }
        }
    }
    out.extend_from_slice(p.row(p.len() - 1));
    out
}

/// Static-kernel Gram of two paths' value rows, entry (i,j) = k(x_i, y_j).
pub fn static_gram(x: &Path, y: &Path, k: StaticKernel) -> Result<DMatrix<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch(x.dim(), y.dim()));
    }
    Ok(DMatrix::from_fn(x.len(), y.len(), |i, j| {
        k.eval(x.row(i), y.row(j))
    }))
}

fn gram_flat(xv: &[f64], yv: &[f64], d: usize, k: StaticKernel) -> Vec<f64> {
    let nx = xv.len() / d;
    let ny = yv.len() / d;
    let mut g = vec![0.0; nx * ny];
    for i in 0..nx {
        let a = &xv[i * d..(i + 1) * d];
        let row = &mut g[i * ny..(i + 1) * ny];
        for (j, gv) in row.iter_mut().enumerate() {
            *gv = k.eval(a, &yv[j * d..(j + 1) * d]);
        }
    }
    g
}

struct GoursatRun<'a> {
    g: &'a [f64],
    nx: usize,
    ny: usize,
    scheme: Scheme,
}

impl GoursatRun<'_> {
    /// Runs the recursion with two rolling rows, invoking `on_row(i, row)`
    /// after each full row i of u is available.
    fn run(&self, mut on_row: impl FnMut(usize, &[f64])) -> Result<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut prev = vec![1.0; ny];
        let mut cur = vec![1.0; ny];
        on_row(0, &prev);
        for i in 1..nx {
            cur[0] = 1.0;
            for j in 1..ny {
                let gi = (i - 1) * ny + (j - 1);
                let delta =
                    self.g[gi + ny + 1] - self.g[gi + ny] - self.g[gi + 1] + self.g[gi];
                cur[j] = match self.scheme {
                    Scheme::FirstOrder => cur[j - 1] + prev[j] - prev[j - 1] + delta * prev[j - 1],
                    Scheme::SecondOrder => {
                        let c = 1.0 + 0.5 * delta + delta * delta / 12.0;
                        (cur[j - 1] + prev[j]) * c - prev[j - 1] * (1.0 - delta * delta / 12.0)
                    }
                };
            }
            if cur.iter().any(|v| !v.is_finite() || v.abs() > 1e300) {
                return Err(Error::NumericalOverflow);
            }
            on_row(i, &cur);
            std::mem::swap(&mut prev, &mut cur);
        }
        Ok(prev[ny - 1])
    }
}

/// Signature kernel k_S(x, y) as u(T,T) of the Goursat PDE. Paths must
/// already be time-augmented; the solver does not re-augment.
pub fn solve_goursat(x: &Path, y: &Path, k: StaticKernel, cfg: &GoursatConfig) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch(x.dim(), y.dim()));
    }
    let d = x.dim();
    let xv = refine_values(x, cfg.dyadic_order);
    let yv = refine_values(y, cfg.dyadic_order);
    let g = gram_flat(&xv, &yv, d, k);
    let run = GoursatRun {
        g: &g,
        nx: xv.len() / d,
        ny: yv.len() / d,
        scheme: cfg.scheme,
    };
    run.run(|_, _| {})
}

/// Full solve that also returns u at the original grid nodes: entry (s,t) is
/// the kernel of x restricted to its first s segments against y restricted
/// to its first t segments. Shape len_x x len_y; row/column 0 is all ones.
pub fn solve_goursat_grid(
    x: &Path,
    y: &Path,
    k: StaticKernel,
    cfg: &GoursatConfig,
) -> Result<DMatrix<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch(x.dim(), y.dim()));
    }
    let d = x.dim();
    let sub = 1usize << cfg.dyadic_order;
    let xv = refine_values(x, cfg.dyadic_order);
    let yv = refine_values(y, cfg.dyadic_order);
    let g = gram_flat(&xv, &yv, d, k);
    let run = GoursatRun {
        g: &g,
        nx: xv.len() / d,
        ny: yv.len() / d,
        scheme: cfg.scheme,
    };
    let mut out = DMatrix::from_element(x.len(), y.len(), 1.0);
    run.run(|i, row| {
        if i % sub == 0 {
            let s = i / sub;
            for t in 0..y.len() {
                out[(s, t)] = row[t * sub];
            }
        }
    })?;
    Ok(out)
}

/// Goursat recursion driven directly by a precomputed kernel surface:
/// entry (s,t) of `g` is the inner product of the two (abstract) paths
/// restricted to their first s and t nodes. No refinement is applied; the
/// driving coefficient on each cell is the second mixed difference of `g`.
/// This is the second-level solve used on conditional-KME inner products.
pub fn solve_goursat_surface(g: &DMatrix<f64>, scheme: Scheme) -> Result<f64> {
    let (nx, ny) = (g.nrows(), g.ncols());
    let mut flat = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            flat[i * ny + j] = g[(i, j)];
        }
    }
    let run = GoursatRun {
        g: &flat,
        nx,
        ny,
        scheme,
    };
    run.run(|_, _| {})
}

/// Batched kernel Gram: entry (i,j) = solve_goursat(A_i, B_j). With
/// `symmetric` (A and B the same list) only the upper triangle is solved and
/// mirrored. Cells are independent, so the map parallelizes; assembly order
/// is fixed by index.
pub fn gram_matrix(
    a: &[Path],
    b: &[Path],
    k: StaticKernel,
    cfg: &GoursatConfig,
    symmetric: bool,
) -> Result<DMatrix<f64>> {
    let (n, m) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = if symmetric {
        assert_eq!(n, m, "symmetric gram requires A = B");
        (0..n).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
    } else {
        (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect()
    };
    let solved = cells
        .par_iter()
        .map(|&(i, j)| solve_goursat(&a[i], &b[j], k, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(n, m);
    for (&(i, j), v) in cells.iter().zip(solved) {
        out[(i, j)] = v;
        if symmetric {
            out[(j, i)] = v;
        }
    }
    Ok(out)
}
