//! l1-regularised sparse coding over a labelled dictionary and the quantities
//! derived from a code: per-class residuals, the SRC decision, the sparsity
//! concentration index and the residual ratio.
//!
//! The coding problem is
//!
//! ```text
//! minimise ||x||_1  subject to  ||y - Y x||_2 <= epsilon
//! ```
//!
//! Two solvers are provided. Both go through the penalised problem
//! `1/2 ||y - Y x||^2 + lambda ||x||_1`, whose solution residual grows
//! monotonically with `lambda`; the constrained solution is the penalised one
//! at the `lambda` where the residual equals `epsilon` (or zero when
//! `||y|| <= epsilon`).
//!
//! * [`SolverKind::Homotopy`] follows the piecewise-linear penalised path from
//!   `lambda = ||Y^T y||_inf` downwards and stops inside the segment where the
//!   residual reaches `epsilon`, solving a quadratic for the exact crossing.
//! * [`SolverKind::ProximalBisection`] runs accelerated proximal gradient
//!   (FISTA with restarts) for a fixed `lambda` and bisects `log lambda` until
//!   the residual constraint is active within tolerance.
//!
//! Both report the duality gap of the constrained problem for the returned
//! point, using the dual feasible `z = r / ||Y^T r||_inf`:
//! `gap = ||x||_1 - (y.r - epsilon ||r||) / ||Y^T r||_inf`.

mod classify;
mod dictionary;
mod homotopy;
mod proximal;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use self::classify::{
    class_residuals, ratio_score, represent, sci, src_classify, ResidualVector, SciScore,
    SrcOutcome, RATIO_CAP,
};
pub use self::dictionary::{Dictionary, UNIT_NORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, norm2, norm_inf, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Homotopy,
    ProximalBisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Relative duality gap accepted at termination.
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    /// Return the smallest-residual point instead of failing when no code
    /// satisfies the residual bound.
    pub allow_infeasible: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Homotopy,
            gap_tolerance: 1e-6,
            max_iterations: 10_000,
            allow_infeasible: false,
        }
    }
}

/// Termination record of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub solver: SolverKind,
    /// Penalty weight of the penalised problem the code solves.
    pub lambda: f64,
    /// Duality gap of the constrained problem.
    pub gap: f64,
    /// Whether `residual_norm <= epsilon` holds.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// `||y - Y x||_2`, recomputed from the coefficients.
    pub residual_norm: f64,
    pub iterations: usize,
    pub diagnostics: SolverDiagnostics,
}

impl SparseCode {
    pub fn l1_norm(&self) -> f64 {
        norm1(&self.coefficients)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&v| v == 0.0)
    }
}

/// Solves the constrained l1 problem for `y` over `dict`.
pub fn solve_l1(
    dict: &Dictionary,
    y: &[f64],
    epsilon: f64,
    config: &SolverConfig,
) -> Result<SparseCode> {
    solve_l1_matrix(dict.atoms(), y, epsilon, config)
}

/// As [`solve_l1`] on a bare matrix of unit-norm columns.
pub fn solve_l1_matrix(
    atoms: &Matrix,
    y: &[f64],
    epsilon: f64,
    config: &SolverConfig,
) -> Result<SparseCode> {
    if y.len() != atoms.rows() {
        return Err(Error::DimensionMismatch {
            expected: atoms.rows(),
            got: y.len(),
        });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::param("epsilon", "must be finite and nonnegative"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("test vector has non-finite entries".into()));
    }
    let ynorm = norm2(y);
    if ynorm <= epsilon {
        return Ok(SparseCode {
            coefficients: vec![0.0; atoms.cols()],
            residual_norm: ynorm,
            iterations: 0,
            diagnostics: SolverDiagnostics {
                solver: config.kind,
                lambda: norm_inf(&atoms.tr_mul_vec(y)),
                gap: 0.0,
                feasible: true,
            },
        });
    }
    match config.kind {
        SolverKind::Homotopy => homotopy::solve(atoms, y, epsilon, config),
        SolverKind::ProximalBisection => proximal::solve(atoms, y, epsilon, config),
    }
}

/// `(residual, ||r||)` for a code.
pub(crate) fn residual(atoms: &Matrix, y: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let mut r = y.to_vec();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            crate::linalg::axpy(-xj, atoms.col(j), &mut r);
        }
    }
    let n = norm2(&r);
    (r, n)
}

/// Duality gap of the constrained problem at `x` with residual `r`.
pub(crate) fn constrained_gap(atoms: &Matrix, y: &[f64], x: &[f64], r: &[f64], epsilon: f64) -> f64 {
    let cinf = norm_inf(&atoms.tr_mul_vec(r));
    let primal = norm1(x);
    if cinf == 0.0 {
        // r is orthogonal to every atom: either r = 0 (exact fit) or no atom
        // can reduce it further; the bound degenerates to the primal value.
        return 0.0;
    }
    let dual = (dot(y, r) - epsilon * norm2(r)) / cinf;
    (primal - dual).max(0.0)
}

/// Gap tolerance scaled to the objective.
pub(crate) fn gap_ok(gap: f64, x: &[f64], tol: f64) -> bool {
    gap <= tol * norm1(x).max(1.0)
}
