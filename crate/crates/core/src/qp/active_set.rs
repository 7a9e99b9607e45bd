//! Primal-dual active-set iteration on the dual of the QP.
//!
//! With `U = U₀ + H⁻¹Aᵀλ` (`U₀` the unconstrained minimizer) the constraint
//! values are `g + Qλ` where `g = AU₀ + b` and `Q = AH⁻¹Aᵀ`. For a guessed
//! active set `S` the rows in `S` are made tight by solving
//! `Q_SS λ_S = -g_S`; the guess is then corrected from the signs of `λ` and
//! of the remaining constraint values.

use std::collections::HashSet;

use super::envelope::{gram, EnvelopeCholesky};
use super::sparse::CsrMatrix;
use super::{row_magnitudes, QpProblem};

/// Relative acceptance threshold for feasibility and dual sign.
const ACCEPT: f64 = 1e-9;

pub(crate) enum PolishOutcome {
    Solved {
        primal: Vec<f64>,
        dual: Vec<f64>,
        rounds: usize,
    },
    Failed {
        rounds: usize,
    },
}

pub(crate) struct ActiveSetContext<'a> {
    problem: &'a QpProblem,
    unconstrained: Vec<f64>,
    g: Vec<f64>,
    h_inv: Vec<f64>,
}

impl<'a> ActiveSetContext<'a> {
    pub(crate) fn new(problem: &'a QpProblem, unconstrained: Vec<f64>, g: Vec<f64>) -> Self {
        let h_inv = problem.hessian_diag.iter().map(|h| 1.0 / h).collect();
        ActiveSetContext {
            problem,
            unconstrained,
            g,
            h_inv,
        }
    }

    pub(crate) fn unconstrained(&self) -> &[f64] {
        &self.unconstrained
    }

    pub(crate) fn violated_at_unconstrained(&self) -> Vec<bool> {
        self.g.iter().map(|&v| v < 0.0).collect()
    }

    /// Runs up to `max_rounds` active-set corrections starting from `seed`.
    pub(crate) fn polish(&self, seed: Vec<bool>, max_rounds: usize) -> PolishOutcome {
        let m = self.problem.num_rows();
        let mut active = seed;
        let mut seen: HashSet<Vec<bool>> = HashSet::new();
        let mut magnitude = vec![0.0; m];
        for round in 1..=max_rounds.max(1) {
            if !seen.insert(active.clone()) {
                return PolishOutcome::Failed { rounds: round - 1 };
            }
            let Some((primal, lambda)) = self.solve_on(&active) else {
                return PolishOutcome::Failed { rounds: round };
            };
            let values = self.problem.constraint_values(&primal);
            row_magnitudes(self.problem, &primal, &mut magnitude);
            let lambda_scale = lambda.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
            let mut next = active.clone();
            let mut optimal = true;
            for i in 0..m {
                if active[i] && values[i] < -ACCEPT * magnitude[i] {
                    // The reduced solve could not make this row tight.
                    return PolishOutcome::Failed { rounds: round };
                }
                if active[i] {
                    if lambda[i] < -ACCEPT * lambda_scale.max(1e-300) {
                        next[i] = false;
                        optimal = false;
                    }
                } else if values[i] < -ACCEPT * magnitude[i] {
                    next[i] = true;
                    optimal = false;
                }
            }
            if optimal {
                let dual = lambda.into_iter().map(|l| l.max(0.0)).collect();
                return PolishOutcome::Solved {
                    primal,
                    dual,
                    rounds: round,
                };
            }
            active = next;
        }
        PolishOutcome::Failed { rounds: max_rounds }
    }

    /// Makes every row in `active` tight. Returns the primal point and the
    /// full-length multiplier vector, or `None` if the reduced system could
    /// not be solved accurately.
    fn solve_on(&self, active: &[bool]) -> Option<(Vec<f64>, Vec<f64>)> {
        let a = &self.problem.a;
        let rows: Vec<usize> = (0..a.nrows()).filter(|&i| active[i]).collect();
        let mut lambda = vec![0.0; a.nrows()];
        if rows.is_empty() {
            return Some((self.unconstrained.clone(), lambda));
        }
        let mut a_s = CsrMatrix::with_capacity(a.ncols(), rows.len(), 8 * rows.len());
        let mut entries = Vec::new();
        for &i in &rows {
            let (cols, vals) = a.row(i);
            entries.clear();
            entries.extend(cols.iter().copied().zip(vals.iter().copied()));
            a_s.push_row(&entries);
        }
        let a_st = a_s.transpose();
        let k = rows.len();
        let q = gram(&a_s, &a_st, &self.h_inv, &vec![0.0; k]);
        let diag_max = (0..k).map(|i| q.get(i, i)).fold(0.0_f64, f64::max);
        if !(diag_max > 0.0) {
            return None;
        }
        // A tiny shift keeps the factorization defined when active rows are
        // linearly dependent; refinement against the unshifted matrix
        // removes its bias when they are not.
        let shift = vec![1e-13 * diag_max; k];
        let shifted = gram(&a_s, &a_st, &self.h_inv, &shift);
        let chol = EnvelopeCholesky::factor(&shifted).ok()?;
        let rhs: Vec<f64> = rows.iter().map(|&i| -self.g[i]).collect();
        let mut x = rhs.clone();
        let mut work = Vec::with_capacity(k);
        chol.solve_in_place(&mut x, &mut work);
        let mut r = vec![0.0; k];
        for _ in 0..3 {
            q.mul_vec(&x, &mut r);
            let mut worst = 0.0_f64;
            for (ri, bi) in r.iter_mut().zip(&rhs) {
                *ri = bi - *ri;
                worst = worst.max(ri.abs());
            }
            if worst == 0.0 {
                break;
            }
            chol.solve_in_place(&mut r, &mut work);
            x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut step = vec![0.0; a.ncols()];
        a_s.tmul_vec(&x, &mut step);
        let primal: Vec<f64> = self
            .unconstrained
            .iter()
            .zip(&step)
            .zip(&self.h_inv)
            .map(|((u0, s), hi)| u0 + hi * s)
            .collect();
        for (&i, xi) in rows.iter().zip(x) {
            lambda[i] = xi;
        }
        Some((primal, lambda))
    }
}
