//! Penalised-path homotopy (LARS with the lasso modification) stopped at the
//! residual level `epsilon`.

use alloc::vec;
use alloc::vec::Vec;

use super::{constrained_gap, gap_ok, residual, SolverConfig, SolverDiagnostics, SolverKind, SparseCode};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, GrowingCholesky, Matrix};

/// Distance from the active span below which a new atom is treated as
/// linearly dependent on it. Unit atoms; well above Cholesky rounding.
const MIN_PIVOT: f64 = 1e-6;
/// Steps between exact recomputations of residual and correlations.
const RESYNC_EVERY: usize = 8;
/// Relative step below which a just-dropped atom's re-entry is ignored.
const REENTRY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum Event {
    /// `lambda` reaches zero.
    PathEnd,
    Add(usize),
    /// Position in the active list.
    Drop(usize),
    /// Residual norm reaches `epsilon`.
    Epsilon,
}

struct Path<'a> {
    atoms: &'a Matrix,
    y: &'a [f64],
    x: Vec<f64>,
    r: Vec<f64>,
    /// Correlations `A^T r`.
    c: Vec<f64>,
    lambda: f64,
    active: Vec<usize>,
    signs: Vec<f64>,
    in_active: Vec<bool>,
    blocked: Vec<bool>,
    chol: GrowingCholesky,
}

impl<'a> Path<'a> {
    fn new(atoms: &'a Matrix, y: &'a [f64]) -> Self {
        let n = atoms.cols();
        let c = atoms.tr_mul_vec(y);
        let lambda = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            atoms,
            y,
            x: vec![0.0; n],
            r: y.to_vec(),
            c,
            lambda,
            active: Vec::new(),
            signs: Vec::new(),
            in_active: vec![false; n],
            blocked: vec![false; n],
            chol: GrowingCholesky::new(),
        }
    }

    fn try_add(&mut self, j: usize) {
        let aj = self.atoms.col(j);
        let cross: Vec<f64> = self.active.iter().map(|&i| dot(self.atoms.col(i), aj)).collect();
        if self.chol.push(&cross, dot(aj, aj), MIN_PIVOT) {
            self.active.push(j);
            self.signs.push(if self.c[j] >= 0.0 { 1.0 } else { -1.0 });
            self.in_active[j] = true;
        } else {
            self.blocked[j] = true;
        }
    }

    fn drop_at(&mut self, pos: usize) {
        let j = self.active.remove(pos);
        self.signs.remove(pos);
        self.in_active[j] = false;
        self.x[j] = 0.0;
        // a smaller active set may admit atoms that were dependent before
        self.blocked.iter_mut().for_each(|b| *b = false);
        self.chol.clear();
        let active = core::mem::take(&mut self.active);
        let signs = core::mem::take(&mut self.signs);
        for (i, s) in active.into_iter().zip(signs) {
            let ai = self.atoms.col(i);
            let cross: Vec<f64> = self.active.iter().map(|&p| dot(self.atoms.col(p), ai)).collect();
            // pivots only grow when an earlier column leaves, so this fails
            // on rounding alone; such an atom leaves as well
            if self.chol.push(&cross, dot(ai, ai), MIN_PIVOT) {
                self.active.push(i);
                self.signs.push(s);
            } else {
                self.in_active[i] = false;
                self.x[i] = 0.0;
                self.blocked[i] = true;
            }
        }
    }

    /// Puts the active coefficients exactly on the path at the current
    /// `lambda`, `x_A = G^-1 (A_A^T y - lambda s)`, then refreshes `r` and `c`.
    fn resync(&mut self) {
        let mut w: Vec<f64> = self
            .active
            .iter()
            .zip(&self.signs)
            .map(|(&j, &s)| dot(self.atoms.col(j), self.y) - self.lambda * s)
            .collect();
        self.chol.solve_in_place(&mut w);
        for (&j, &xj) in self.active.iter().zip(&w) {
            self.x[j] = xj;
        }
        let (r, _) = residual(self.atoms, self.y, &self.x);
        self.r = r;
        self.atoms.tr_mul_vec_into(&self.r, &mut self.c);
    }
}

pub(super) fn solve(atoms: &Matrix, y: &[f64], epsilon: f64, config: &SolverConfig) -> Result<SparseCode> {
    let (m, n) = (atoms.rows(), atoms.cols());
    let mut p = Path::new(atoms, y);
    let first = (0..n)
        .max_by(|&a, &b| p.c[a].abs().total_cmp(&p.c[b].abs()).then(b.cmp(&a)))
        .expect("dictionary is non-empty");
    p.try_add(first);

    let eps2 = epsilon * epsilon;
    let mut d: Vec<f64> = Vec::with_capacity(m.min(n));
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut just_dropped: Option<usize> = None;
    let mut iterations = 0;
    let mut reached = false;

    while iterations < config.max_iterations {
        iterations += 1;

        d.clear();
        d.extend_from_slice(&p.signs);
        p.chol.solve_in_place(&mut d);
        u.iter_mut().for_each(|e| *e = 0.0);
        for (k, &j) in p.active.iter().enumerate() {
            axpy(d[k], atoms.col(j), &mut u);
        }
        atoms.tr_mul_vec_into(&u, &mut v);

        let mut step = p.lambda;
        let mut event = Event::PathEnd;

        // an atom that just left sits on the boundary; only a re-entry after a
        // genuine step (with the opposite sign) is an event
        let admissible = |j: usize, g: f64| just_dropped != Some(j) || g > REENTRY_FLOOR * p.lambda;
        for (j, &vj) in v.iter().enumerate().take(n) {
            if p.in_active[j] || p.blocked[j] {
                continue;
            }
            let cj = p.c[j];
            for (num, den) in [(p.lambda - cj, 1.0 - vj), (p.lambda + cj, 1.0 + vj)] {
                if den > 1e-12 {
                    let g = (num / den).max(0.0);
                    if g < step && admissible(j, g) {
                        step = g;
                        event = Event::Add(j);
                    }
                }
            }
        }
        for (k, &j) in p.active.iter().enumerate() {
            // an atom that entered at zero may carry a rounding-sized value of
            // the wrong sign; it is moving away from zero, not crossing it
            if d[k] != 0.0 && p.x[j] * p.signs[k] > 0.0 {
                let g = -p.x[j] / d[k];
                if g > 0.0 && g < step {
                    step = g;
                    event = Event::Drop(k);
                }
            }
        }
        // ||r - g u||^2 = eps^2, smallest positive root
        let a = dot(&u, &u);
        let b = dot(&p.r, &u);
        let cc = dot(&p.r, &p.r) - eps2;
        if a > 0.0 && b > 0.0 {
            let disc = b * b - a * cc;
            if disc >= 0.0 {
                let g = cc / (b + libm::sqrt(disc));
                if g <= step {
                    step = g.max(0.0);
                    event = Event::Epsilon;
                }
            }
        }

        for (k, &j) in p.active.iter().enumerate() {
            p.x[j] += step * d[k];
        }
        p.lambda -= step;
        axpy(-step, &u, &mut p.r);
        axpy(-step, &v, &mut p.c);
        just_dropped = None;

        match event {
            Event::Epsilon => {
                reached = true;
                break;
            }
            Event::PathEnd => {
                p.lambda = 0.0;
                p.resync();
                break;
            }
            Event::Add(j) => {
                p.resync();
                p.try_add(j);
            }
            Event::Drop(k) => {
                just_dropped = Some(p.active[k]);
                p.drop_at(k);
                p.resync();
            }
        }
        if iterations % RESYNC_EVERY == 0 {
            p.resync();
        }
        if p.active.is_empty() {
            // every atom dropped or blocked; nothing left to move along
            break;
        }
    }

    let (r, rnorm) = residual(atoms, y, &p.x);
    let gap = constrained_gap(atoms, y, &p.x, &r, epsilon);
    // rounding in the final quadratic step can leave ||r|| a hair above eps
    let feasible = rnorm <= epsilon * (1.0 + 1e-9) + 1e-12;
    let diagnostics = SolverDiagnostics {
        solver: SolverKind::Homotopy,
        lambda: p.lambda,
        gap,
        feasible,
    };

    if !reached && !feasible {
        if iterations >= config.max_iterations {
            return Err(Error::NotConverged { iterations, gap });
        }
        if !config.allow_infeasible {
            return Err(Error::Infeasible {
                min_residual: rnorm,
                epsilon,
            });
        }
    } else if !gap_ok(gap, &p.x, config.gap_tolerance) {
        return Err(Error::NotConverged { iterations, gap });
    }

    Ok(SparseCode {
        coefficients: p.x,
        residual_norm: rnorm,
        iterations,
        diagnostics,
    })
}
