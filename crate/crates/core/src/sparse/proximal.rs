//! FISTA on the penalised problem, with bisection on `log lambda` to make the
//! residual constraint active.

use alloc::vec;
use alloc::vec::Vec;

use super::{constrained_gap, gap_ok, residual, SolverConfig, SolverDiagnostics, SolverKind, SparseCode};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, norm2, norm_inf, Matrix};

const MAX_BISECTIONS: usize = 200;
/// Smallest penalty tried, relative to `||A^T y||_inf`.
const LAMBDA_FLOOR: f64 = 1e-12;

/// Largest eigenvalue of `A^T A` by power iteration (deterministic start).
fn lipschitz(atoms: &Matrix) -> f64 {
    let n = atoms.cols();
    // irregular start: a constant vector is an eigenvector of structured
    // Gram matrices, possibly of a small eigenvalue
    let mut v: Vec<f64> = (0..n).map(|j| 0.5 + (j as f64 * 0.618_033_988_75) % 1.0).collect();
    let s = norm2(&v);
    v.iter_mut().for_each(|e| *e /= s);
    let mut est = 0.0;
    for _ in 0..200 {
        let av = atoms.mul_vec(&v);
        let w = atoms.tr_mul_vec(&av);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 1.0;
        }
        let next = nw;
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nw);
        if (next - est).abs() <= 1e-10 * next {
            est = next;
            break;
        }
        est = next;
    }
    // small safety margin keeps the step strictly inside 1/L
    est * 1.01
}

struct Lasso<'a> {
    atoms: &'a Matrix,
    y: &'a [f64],
    step: f64,
}

impl Lasso<'_> {
    /// Relative duality gap of the penalised problem at `x`.
    fn gap(&self, x: &[f64], lambda: f64) -> f64 {
        let (r, rn) = residual(self.atoms, self.y, x);
        let cinf = norm_inf(&self.atoms.tr_mul_vec(&r));
        let scale = if cinf > lambda { lambda / cinf } else { 1.0 };
        let primal = 0.5 * rn * rn + lambda * norm1(x);
        // dual at theta = scale * r: y.theta - |theta|^2 / 2
        let dual = scale * dot(self.y, &r) - 0.5 * scale * scale * rn * rn;
        (primal - dual).max(0.0) / primal.max(f64::MIN_POSITIVE)
    }

    /// FISTA with adaptive restart from `x`; returns iterations used.
    fn minimise(&self, x: &mut [f64], lambda: f64, tol: f64, max_iter: usize) -> (usize, f64) {
        let n = x.len();
        let mut z = x.to_vec();
        let mut x_prev = x.to_vec();
        let mut t = 1.0f64;
        let mut grad = vec![0.0; n];
        let mut gap = f64::INFINITY;
        let thresh = lambda * self.step;
        for it in 1..=max_iter {
            let (r, _) = residual(self.atoms, self.y, &z);
            self.atoms.tr_mul_vec_into(&r, &mut grad);
            x_prev.copy_from_slice(x);
            for j in 0..n {
                let w = z[j] + self.step * grad[j];
                x[j] = if w > thresh {
                    w - thresh
                } else if w < -thresh {
                    w + thresh
                } else {
                    0.0
                };
            }
            // restart when the momentum direction opposes the gradient step
            let mut restart = 0.0;
            for j in 0..n {
                restart += (z[j] - x[j]) * (x[j] - x_prev[j]);
            }
            let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
            if restart > 0.0 {
                t = 1.0;
                z.copy_from_slice(x);
            } else {
                let beta = (t - 1.0) / t_next;
                for j in 0..n {
                    z[j] = x[j] + beta * (x[j] - x_prev[j]);
                }
                t = t_next;
            }
            if it % 20 == 0 || it == max_iter {
                gap = self.gap(x, lambda);
                if gap <= tol {
                    return (it, gap);
                }
            }
        }
        (max_iter, gap)
    }
}

pub(super) fn solve(atoms: &Matrix, y: &[f64], epsilon: f64, config: &SolverConfig) -> Result<SparseCode> {
    let lasso = Lasso {
        atoms,
        y,
        step: 1.0 / lipschitz(atoms),
    };
    let lambda_max = norm_inf(&atoms.tr_mul_vec(y));
    // inner solves must be much tighter than the outer gap target
    let inner_tol = (config.gap_tolerance * 1e-4).max(1e-14);
    let n = atoms.cols();
    let mut iterations = 0;

    // feasibility at the smallest penalty decides whether bisection can work
    let mut lo = lambda_max * LAMBDA_FLOOR;
    let mut x_lo = vec![0.0; n];
    let (it, _) = lasso.minimise(&mut x_lo, lo, inner_tol, config.max_iterations);
    iterations += it;
    let (_, r_lo) = residual(atoms, y, &x_lo);
    if r_lo > epsilon {
        if !config.allow_infeasible {
            return Err(Error::Infeasible {
                min_residual: r_lo,
                epsilon,
            });
        }
        return finish(atoms, y, epsilon, x_lo, lo, iterations, config);
    }

    let mut hi = lambda_max;
    let mut x_warm = vec![0.0; n];
    let target = epsilon * 1e-9;
    for _ in 0..MAX_BISECTIONS {
        let mid = libm::sqrt(lo * hi);
        let mut x = x_warm.clone();
        let (it, _) = lasso.minimise(&mut x, mid, inner_tol, config.max_iterations);
        iterations += it;
        let (_, rn) = residual(atoms, y, &x);
        if rn > epsilon {
            hi = mid;
            x_warm = x;
        } else {
            lo = mid;
            x_warm = x.clone();
            x_lo = x;
            if epsilon - rn <= target {
                break;
            }
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    finish(atoms, y, epsilon, x_lo, lo, iterations, config)
}

fn finish(
    atoms: &Matrix,
    y: &[f64],
    epsilon: f64,
    x: Vec<f64>,
    lambda: f64,
    iterations: usize,
    config: &SolverConfig,
) -> Result<SparseCode> {
    let (r, rnorm) = residual(atoms, y, &x);
    let gap = constrained_gap(atoms, y, &x, &r, epsilon);
    let feasible = rnorm <= epsilon;
    if feasible && !gap_ok(gap, &x, config.gap_tolerance * 1e2) {
        return Err(Error::NotConverged { iterations, gap });
    }
    Ok(SparseCode {
        coefficients: x,
        residual_norm: rnorm,
        iterations,
        diagnostics: SolverDiagnostics {
            solver: SolverKind::ProximalBisection,
            lambda,
            gap,
            feasible,
        },
    })
}
