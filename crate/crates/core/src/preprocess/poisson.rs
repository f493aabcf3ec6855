//! Reintegration of a gradient field into an image.
//!
//! The field `N` need not be integrable (it has been normalized and diffused),
//! so the image is the least-squares fit `min_X ||G X - N||²`, where `G` is the
//! replicate-edge central-difference gradient. Its normal equations
//!
//! ```text
//! Gᵀ G X = Gᵀ N        (i.e. ∇²X = div N with div = -Gᵀ, ∇² = -GᵀG)
//! ```
//!
//! are the discrete Poisson equation with zero-flux boundaries built into the
//! operator. Because the Laplacian is the exact composition of the divergence
//! with the gradient, `integrate(gradient(Y)) = Y` up to the additive constant.
//! The null space of `G` is the constants, so the solution is pinned by fixing
//! its mean to 0.5.

use super::{GradientField, PreprocessConfig};
use crate::error::Result;
use crate::imaging::Image;

/// Outcome of a reintegration. A solve that exhausts its iteration budget is
/// reported with `converged == false`; the image is still returned.
#[derive(Debug, Clone)]
pub struct Integration {
    pub image: Image,
    pub iterations: usize,
    /// Max-norm of `GᵀN - GᵀG X` at exit.
    pub residual: f64,
    pub converged: bool,
}

/// `DᵀD` for the 1-D central-difference operator `D` of length `n`, stored
/// as five diagonals (offsets -2..=2).
struct AxisOperator {
    band: Vec<[f64; 5]>,
}

/// Column indices of the `+1/2` and `-1/2` taps of row `j` of `D`, or `None`
/// when the row is identically zero (`n == 1`).
fn central_row(j: usize, n: usize) -> Option<(usize, usize)> {
    let plus = (j + 1).min(n - 1);
    let minus = j.saturating_sub(1);
    (plus != minus).then_some((plus, minus))
}

impl AxisOperator {
    fn new(n: usize) -> Self {
        let mut band = vec![[0.0; 5]; n];
        let mut add = |a: usize, b: usize, v: f64| band[a][b + 2 - a] += v;
        for j in 0..n {
            if let Some((p, m)) = central_row(j, n) {
                add(p, p, 0.25);
                add(m, m, 0.25);
                add(p, m, -0.25);
                add(m, p, -0.25);
            }
        }
        AxisOperator { band }
    }

    /// `out += Dᵀ g` for a strided 1-D view.
    fn add_adjoint(g: impl Fn(usize) -> f64, n: usize, mut out: impl FnMut(usize, f64)) {
        for j in 0..n {
            if let Some((p, m)) = central_row(j, n) {
                let half = 0.5 * g(j);
                out(p, half);
                out(m, -half);
            }
        }
    }
}

struct PoissonSystem {
    w: usize,
    h: usize,
    rows: AxisOperator,
    cols: AxisOperator,
    rhs: Vec<f64>,
}

impl PoissonSystem {
    fn new(field: &GradientField) -> Self {
        let (w, h) = (field.width(), field.height());
        let mut rhs = vec![0.0; w * h];
        for r in 0..h {
            let gx = &field.gx()[r * w..(r + 1) * w];
            AxisOperator::add_adjoint(|j| gx[j], w, |c, v| rhs[r * w + c] += v);
        }
        for c in 0..w {
            let gy = field.gy();
            AxisOperator::add_adjoint(|j| gy[j * w + c], h, |r, v| rhs[r * w + c] += v);
        }
        PoissonSystem {
            w,
            h,
            rows: AxisOperator::new(w),
            cols: AxisOperator::new(h),
            rhs,
        }
    }

    /// Off-diagonal part of row `(r, c)` of `GᵀG` applied to `x`, plus the diagonal.
    #[inline]
    fn row_terms(&self, x: &[f64], r: usize, c: usize) -> (f64, f64) {
        let w = self.w;
        let bw = &self.rows.band[c];
        let bh = &self.cols.band[r];
        let mut off = 0.0;
        for k in [0usize, 1, 3, 4] {
            if bw[k] != 0.0 {
                off += bw[k] * x[r * w + c + k - 2];
            }
            if bh[k] != 0.0 {
                off += bh[k] * x[(r + k - 2) * w + c];
            }
        }
        (off, bw[2] + bh[2])
    }

    fn sweep(&self, x: &mut [f64]) {
        for r in 0..self.h {
            for c in 0..self.w {
                let (off, diag) = self.row_terms(x, r, c);
                if diag > 0.0 {
                    x[r * self.w + c] = (self.rhs[r * self.w + c] - off) / diag;
                }
            }
        }
    }

    fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.h {
            for c in 0..self.w {
                let (off, diag) = self.row_terms(x, r, c);
                let i = r * self.w + c;
                worst = worst.max((self.rhs[i] - off - diag * x[i]).abs());
            }
        }
        worst
    }
}

const RESIDUAL_CHECK_INTERVAL: usize = 8;

/// Solves `GᵀG X = GᵀN` by Gauss–Seidel sweeps until the max residual falls
/// below `cfg.integration_tol` or `cfg.integration_iters` sweeps have run,
/// then shifts the result to mean 0.5.
pub fn integrate_gradients(field: &GradientField, cfg: &PreprocessConfig) -> Result<Integration> {
    cfg.validate()?;
    let system = PoissonSystem::new(field);
    let mut x = vec![0.0; field.width() * field.height()];

    let mut iterations = 0;
    let mut residual = system.max_residual(&x);
    while residual >= cfg.integration_tol && iterations < cfg.integration_iters {
        let batch = RESIDUAL_CHECK_INTERVAL.min(cfg.integration_iters - iterations);
        for _ in 0..batch {
            system.sweep(&mut x);
        }
        iterations += batch;
        residual = system.max_residual(&x);
    }

    let shift = 0.5 - x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v += shift);
    Ok(Integration {
        image: Image::from_raw(field.width(), field.height(), x),
        iterations,
        residual,
        converged: residual < cfg.integration_tol,
    })
}
