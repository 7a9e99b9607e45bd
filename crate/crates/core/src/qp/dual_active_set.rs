//! Goldfarb–Idnani dual active-set method in range-space form.
//!
//! Starting from the unconstrained minimizer, the most violated row is made
//! active one at a time while every active multiplier stays non-negative;
//! a multiplier that would turn negative drops its row first. The active
//! Gram matrix `A_S H⁻¹ A_Sᵀ` is kept as a dense Cholesky factor updated in
//! place, so each step costs `O(k²)` plus sparse row products. Unlike the
//! primal-dual active-set iteration this terminates finitely, including on
//! degenerate sets where active rows are linearly dependent.

use super::QpProblem;

/// Relative violation below which a row counts as satisfied.
const ACCEPT: f64 = 1e-9;
/// Relative Schur-complement pivot below which a row is treated as
/// linearly dependent on the active set.
const DEPENDENT: f64 = 1e-12;

pub(crate) enum DualOutcome {
    Solved {
        primal: Vec<f64>,
        dual: Vec<f64>,
        active: Vec<bool>,
        steps: usize,
    },
    Infeasible {
        steps: usize,
    },
    Stalled {
        steps: usize,
    },
}

/// Lower-triangular factor of the active Gram matrix, one row per active
/// constraint.
struct Factor {
    rows: Vec<Vec<f64>>,
}

impl Factor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Solves `L y = b` in place.
    fn forward(&self, b: &mut [f64]) {
        for i in 0..self.len() {
            let row = &self.rows[i];
            let mut acc = b[i];
            for j in 0..i {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `Lᵀ y = b` in place.
    fn backward(&self, b: &mut [f64]) {
        for i in (0..self.len()).rev() {
            let mut acc = b[i];
            for j in i + 1..self.len() {
                acc -= self.rows[j][i] * b[j];
            }
            b[i] = acc / self.rows[i][i];
        }
    }

    fn push(&mut self, mut l: Vec<f64>, pivot: f64) {
        l.push(pivot);
        self.rows.push(l);
    }

    /// Removes active position `idx`, restoring triangularity with Givens
    /// rotations on adjacent columns.
    fn remove(&mut self, idx: usize) {
        self.rows.remove(idx);
        let k = self.len();
        for r in idx..k {
            let (a, b) = (self.rows[r][r], self.rows[r][r + 1]);
            let h = a.hypot(b);
            let (c, s) = if h == 0.0 { (1.0, 0.0) } else { (a / h, b / h) };
            for row in &mut self.rows[r..] {
                let (x, y) = (row[r], row[r + 1]);
                row[r] = c * x + s * y;
                row[r + 1] = -s * x + c * y;
            }
        }
        for (r, row) in self.rows.iter_mut().enumerate() {
            row.truncate(r + 1);
        }
        // Negating a whole column keeps L·Lᵀ and restores a positive diagonal.
        for c in 0..k {
            if self.rows[c][c] < 0.0 {
                for row in &mut self.rows[c..] {
                    row[c] = -row[c];
                }
            }
        }
    }
}

pub(crate) struct DualActiveSet<'a> {
    problem: &'a QpProblem,
    h_inv: Vec<f64>,
    max_steps: usize,
}

impl<'a> DualActiveSet<'a> {
    pub(crate) fn new(problem: &'a QpProblem, max_steps: usize) -> Self {
        let h_inv = problem.hessian_diag.iter().map(|h| 1.0 / h).collect();
        DualActiveSet {
            problem,
            h_inv,
            max_steps,
        }
    }

    /// `a_iᵀ H⁻¹ a_j` for two sparse rows.
    fn gram(&self, i: usize, j: usize) -> f64 {
        let (ci, vi) = self.problem.a.row(i);
        let (cj, vj) = self.problem.a.row(j);
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < ci.len() && q < cj.len() {
            match ci[p].cmp(&cj[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += vi[p] * vj[q] * self.h_inv[ci[p]];
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    fn row_value(&self, i: usize, x: &[f64]) -> (f64, f64) {
        let (cols, vals) = self.problem.a.row(i);
        let mut acc = self.problem.b[i];
        let mut mag = self.problem.b[i].abs();
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * x[c];
            mag += (v * x[c]).abs();
        }
        (acc, mag.max(f64::MIN_POSITIVE))
    }

    /// Adds `H⁻¹ Σ coef_j a_j` to `x`.
    fn add_rows(&self, x: &mut [f64], rows: &[usize], coef: &[f64], scale: f64) {
        for (&i, &w) in rows.iter().zip(coef) {
            let (cols, vals) = self.problem.a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                x[c] += scale * w * v * self.h_inv[c];
            }
        }
    }

    pub(crate) fn solve(&self, unconstrained: &[f64]) -> DualOutcome {
        let m = self.problem.num_rows();
        let mut x = unconstrained.to_vec();
        let mut active: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let mut in_set = vec![false; m];
        let mut factor = Factor { rows: Vec::new() };
        let norms: Vec<f64> = (0..m).map(|i| self.gram(i, i).sqrt()).collect();
        let mut steps = 0;

        loop {
            // Most violated row, measured in the metric of H.
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..m {
                if in_set[i] || norms[i] == 0.0 {
                    continue;
                }
                let (s, mag) = self.row_value(i, &x);
                if s < -ACCEPT * mag {
                    let score = s / norms[i];
                    if pick.is_none_or(|(_, best)| score < best) {
                        pick = Some((i, score));
                    }
                }
            }
            let Some((p, _)) = pick else {
                let mut dual = vec![0.0; m];
                for (&i, &l) in active.iter().zip(&lambda) {
                    dual[i] = l.max(0.0);
                }
                return DualOutcome::Solved {
                    primal: x,
                    dual,
                    active: in_set,
                    steps,
                };
            };
            let mut lambda_p = 0.0;
            loop {
                steps += 1;
                if steps > self.max_steps {
                    return DualOutcome::Stalled { steps };
                }
                let k = active.len();
                let q: Vec<f64> = active.iter().map(|&j| self.gram(j, p)).collect();
                let mut l = q.clone();
                factor.forward(&mut l);
                let app = norms[p] * norms[p];
                let d2 = app - l.iter().map(|v| v * v).sum::<f64>();
                let mut r = l.clone();
                factor.backward(&mut r);
                let dependent = d2 <= DEPENDENT * app;

                // Largest step keeping active multipliers non-negative.
                let mut t1 = f64::INFINITY;
                let mut block = None;
                for j in 0..k {
                    if r[j] > 0.0 {
                        let t = lambda[j] / r[j];
                        if t < t1 {
                            t1 = t;
                            block = Some(j);
                        }
                    }
                }
                let (s_p, _) = self.row_value(p, &x);
                let t2 = if dependent { f64::INFINITY } else { (-s_p / d2).max(0.0) };
                if t1.is_infinite() && t2.is_infinite() {
                    return DualOutcome::Infeasible { steps };
                }
                let t = t1.min(t2);
                if !dependent {
                    // x += t·H⁻¹(a_p − A_Sᵀ r)
                    self.add_rows(&mut x, &[p], &[1.0], t);
                    self.add_rows(&mut x, &active, &r, -t);
                }
                for (lj, rj) in lambda.iter_mut().zip(&r) {
                    *lj -= t * rj;
                }
                lambda_p += t;
                if t2 <= t1 {
                    factor.push(l, d2.sqrt());
                    active.push(p);
                    lambda.push(lambda_p);
                    in_set[p] = true;
                    break;
                }
                let j = block.expect("finite partial step has a blocking row");
                factor.remove(j);
                in_set[active[j]] = false;
                active.remove(j);
                lambda.remove(j);
            }
        }
    }
}
