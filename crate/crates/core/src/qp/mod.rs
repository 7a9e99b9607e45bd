//! Convex QP with a diagonal Hessian and inequality rows:
//!
//! ```text
//! minimize   ½ Uᵀ diag(h) U + cᵀ U
//! subject to A U + b ≥ 0
//! ```
//!
//! [`SparseQpSolver`] is the production path. It first tries the
//! unconstrained minimizer, then a primal-dual active-set iteration seeded
//! from the warm start. If that cycles, a Goldfarb–Idnani dual active-set
//! method solves from scratch with finite termination. An operator-splitting
//! (ADMM) loop is kept as a last resort. Every linear solve goes
//! through an envelope Cholesky factorization, so per-iteration cost tracks
//! the number of nonzeros.
//!
//! [`solve_dense_reference`] is an independent dense dual active-set method
//! used as a test oracle.

mod active_set;
mod admm;
mod dense;
mod dual_active_set;
mod envelope;
mod sparse;

use thiserror::Error;

pub use dense::solve_dense_reference;
pub use sparse::CsrMatrix;

use active_set::{ActiveSetContext, PolishOutcome};
use admm::{Admm, AdmmStatus};
use dual_active_set::{DualActiveSet, DualOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("hessian diagonal entry {0} is not strictly positive")]
    NotStrictlyConvex(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian_diag: Vec<f64>,
    pub linear: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
}

impl QpProblem {
    pub fn new(hessian_diag: Vec<f64>, linear: Vec<f64>, a: CsrMatrix, b: Vec<f64>) -> Result<Self, QpError> {
        let p = QpProblem {
            hessian_diag,
            linear,
            a,
            b,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.hessian_diag.len();
        if self.linear.len() != n {
            return Err(QpError::Dimension(format!(
                "linear has {} entries, expected {n}",
                self.linear.len()
            )));
        }
        if self.a.ncols() != n {
            return Err(QpError::Dimension(format!(
                "A has {} columns, expected {n}",
                self.a.ncols()
            )));
        }
        if self.b.len() != self.a.nrows() {
            return Err(QpError::Dimension(format!(
                "b has {} entries, A has {} rows",
                self.b.len(),
                self.a.nrows()
            )));
        }
        if let Some(i) = self.hessian_diag.iter().position(|&h| !(h > 0.0)) {
            return Err(QpError::NotStrictlyConvex(i));
        }
        if self.hessian_diag.iter().any(|h| !h.is_finite()) {
            return Err(QpError::NonFinite("hessian_diag"));
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("linear"));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("b"));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.hessian_diag.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// `-diag(h)⁻¹ c`
    pub fn unconstrained_minimizer(&self) -> Vec<f64> {
        self.linear
            .iter()
            .zip(&self.hessian_diag)
            .map(|(c, h)| -c / h)
            .collect()
    }

    /// `A U + b`
    pub fn constraint_values(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_rows()];
        self.a.mul_vec(u, &mut g);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi += bi;
        }
        g
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.hessian_diag)
            .zip(&self.linear)
            .map(|((x, h), c)| 0.5 * h * x * x + c * x)
            .sum()
    }

    /// Primal infeasibility, stationarity and complementarity residuals
    /// (infinity norms) of a candidate `(primal, dual)` pair.
    pub fn kkt_residuals(&self, primal: &[f64], dual: &[f64]) -> KktResiduals {
        let g = self.constraint_values(primal);
        let primal_res = g.iter().fold(0.0_f64, |m, v| m.max(-v));
        let mut at_dual = vec![0.0; self.num_vars()];
        self.a.tmul_vec(dual, &mut at_dual);
        let stationarity = (0..self.num_vars())
            .map(|j| (self.hessian_diag[j] * primal[j] + self.linear[j] - at_dual[j]).abs())
            .fold(0.0_f64, f64::max);
        let dual_sign = dual.iter().fold(0.0_f64, |m, v| m.max(-v));
        let complementarity = g
            .iter()
            .zip(dual)
            .map(|(gi, li)| (gi * li).abs())
            .fold(0.0_f64, f64::max);
        KktResiduals {
            primal: primal_res.max(0.0),
            stationarity,
            dual_sign,
            complementarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn dual(&self) -> f64 {
        self.stationarity.max(self.dual_sign).max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIters,
    InfeasibleDetected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// `U = [u₀, u, s]` for thread problems.
    pub primal: Vec<f64>,
    /// One non-negative multiplier per row.
    pub dual: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// `‖max(0, -(A U + b))‖∞`
    pub primal_residual: f64,
    /// Worst of stationarity, dual sign and complementarity.
    pub dual_residual: f64,
}

impl QpSolution {
    fn finish(problem: &QpProblem, primal: Vec<f64>, dual: Vec<f64>, status: QpStatus, iterations: usize) -> Self {
        let r = problem.kkt_residuals(&primal, &dual);
        QpSolution {
            primal,
            dual,
            status,
            iterations,
            primal_residual: r.primal,
            dual_residual: r.dual(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Feasibility and optimality tolerance.
    pub tol: f64,
    /// Budget shared by active-set rounds and ADMM iterations.
    pub max_iters: usize,
    /// Active-set rounds tried before falling back to ADMM.
    pub active_set_rounds: usize,
    /// ADMM iterations between polishing attempts.
    pub polish_interval: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-6,
            max_iters: 10_000,
            active_set_rounds: 12,
            polish_interval: 25,
        }
    }
}

/// Per-instance counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverCounters {
    pub solves: u64,
    pub shortcut: u64,
    pub active_set: u64,
    pub dual_active_set: u64,
    pub admm: u64,
    pub max_iters: u64,
    pub infeasible: u64,
}

/// Sparse QP solver. Holds scratch space between solves; one instance per
/// simulation loop.
#[derive(Debug, Default)]
pub struct SparseQpSolver {
    pub settings: QpSettings,
    counters: SolverCounters,
}

impl SparseQpSolver {
    pub fn new(settings: QpSettings) -> Self {
        SparseQpSolver {
            settings,
            counters: SolverCounters::default(),
        }
    }

    pub fn counters(&self) -> SolverCounters {
        self.counters
    }

    pub fn solve(&mut self, problem: &QpProblem, warm_start: Option<&QpSolution>) -> Result<QpSolution, QpError> {
        problem.validate()?;
        self.counters.solves += 1;
        let settings = self.settings;
        let m = problem.num_rows();

        let unconstrained = problem.unconstrained_minimizer();
        let g = problem.constraint_values(&unconstrained);
        let mut magnitude = vec![0.0; m];
        row_magnitudes(problem, &unconstrained, &mut magnitude);
        if g.iter().zip(&magnitude).all(|(gi, mi)| *gi >= -1e-12 * mi) {
            self.counters.shortcut += 1;
            let dual = vec![0.0; m];
            return Ok(QpSolution::finish(problem, unconstrained, dual, QpStatus::Optimal, 0));
        }

        let ctx = ActiveSetContext::new(problem, unconstrained, g);
        let warm = warm_start.filter(|w| w.dual.len() == m && w.primal.len() == problem.num_vars());
        let seed: Vec<bool> = match warm {
            Some(w) => w.dual.iter().map(|&l| l > 0.0).collect(),
            None => ctx.violated_at_unconstrained(),
        };
        let mut used = 0;
        match ctx.polish(seed, settings.active_set_rounds.min(settings.max_iters)) {
            PolishOutcome::Solved { primal, dual, rounds } => {
                self.counters.active_set += 1;
                return Ok(QpSolution::finish(problem, primal, dual, QpStatus::Optimal, rounds));
            }
            PolishOutcome::Failed { rounds } => used += rounds,
        }

        let budget = settings.max_iters.saturating_sub(used).max(1);
        match DualActiveSet::new(problem, budget).solve(ctx.unconstrained()) {
            DualOutcome::Solved {
                primal,
                dual,
                active,
                steps,
            } => {
                used += steps;
                self.counters.dual_active_set += 1;
                // A short refinement on the final set tightens round-off
                // accumulated over the incremental updates.
                if let PolishOutcome::Solved { primal, dual, rounds } = ctx.polish(active, 2) {
                    return Ok(QpSolution::finish(
                        problem,
                        primal,
                        dual,
                        QpStatus::Optimal,
                        used + rounds,
                    ));
                }
                return Ok(QpSolution::finish(problem, primal, dual, QpStatus::Optimal, used));
            }
            DualOutcome::Infeasible { steps } => {
                self.counters.infeasible += 1;
                let primal = ctx.unconstrained().to_vec();
                let dual = vec![0.0; m];
                return Ok(QpSolution::finish(
                    problem,
                    primal,
                    dual,
                    QpStatus::InfeasibleDetected,
                    used + steps,
                ));
            }
            DualOutcome::Stalled { steps } => used += steps,
        }

        self.counters.admm += 1;
        let mut admm = Admm::new(problem, warm.map(|w| (w.primal.as_slice(), w.dual.as_slice())));
        let budget = settings.max_iters.saturating_sub(used).max(1);
        let mut since_polish = 0;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut final_status = QpStatus::MaxIters;
        while admm.iterations() < budget {
            let status = admm.step(settings.tol);
            since_polish += 1;
            let score = admm.residual_score(settings.tol);
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, admm.primal(), admm.dual()));
            }
            match status {
                AdmmStatus::Running => {}
                AdmmStatus::Converged => {
                    final_status = QpStatus::Optimal;
                    break;
                }
                AdmmStatus::PrimalInfeasible => {
                    final_status = QpStatus::InfeasibleDetected;
                    break;
                }
            }
            if since_polish >= settings.polish_interval {
                since_polish = 0;
                if let PolishOutcome::Solved { primal, dual, rounds } = ctx.polish(admm.active_guess(), 4) {
                    return Ok(QpSolution::finish(
                        problem,
                        primal,
                        dual,
                        QpStatus::Optimal,
                        used + admm.iterations() + rounds,
                    ));
                }
            }
        }
        let iterations = used + admm.iterations();
        match final_status {
            QpStatus::Optimal => {
                if let PolishOutcome::Solved { primal, dual, rounds } = ctx.polish(admm.active_guess(), 8) {
                    return Ok(QpSolution::finish(
                        problem,
                        primal,
                        dual,
                        QpStatus::Optimal,
                        iterations + rounds,
                    ));
                }
                let mut dual = admm.dual();
                dual.iter_mut().for_each(|l| *l = l.max(0.0));
                Ok(QpSolution::finish(
                    problem,
                    admm.primal(),
                    dual,
                    QpStatus::Optimal,
                    iterations,
                ))
            }
            QpStatus::InfeasibleDetected => {
                self.counters.infeasible += 1;
                Ok(QpSolution::finish(
                    problem,
                    admm.primal(),
                    admm.dual(),
                    QpStatus::InfeasibleDetected,
                    iterations,
                ))
            }
            QpStatus::MaxIters => {
                self.counters.max_iters += 1;
                let (_, primal, mut dual) = best.unwrap_or_else(|| (0.0, admm.primal(), admm.dual()));
                dual.iter_mut().for_each(|l| *l = l.max(0.0));
                Ok(QpSolution::finish(
                    problem,
                    primal,
                    dual,
                    QpStatus::MaxIters,
                    iterations,
                ))
            }
        }
    }
}

/// `|b_i| + Σ_j |A_ij U_j|`, the scale against which row `i` is compared.
pub(crate) fn row_magnitudes(problem: &QpProblem, u: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let (cols, vals) = problem.a.row(i);
        let mut acc = problem.b[i].abs();
        for (&c, &v) in cols.iter().zip(vals) {
            acc += (v * u[c]).abs();
        }
        *o = acc.max(f64::MIN_POSITIVE);
    }
}

/// One-shot sparse solve with default settings apart from `tol` and
/// `max_iters`.
pub fn solve_sparse(
    problem: &QpProblem,
    warm_start: Option<&QpSolution>,
    tol: f64,
    max_iters: usize,
) -> Result<QpSolution, QpError> {
    let mut solver = SparseQpSolver::new(QpSettings {
        tol,
        max_iters,
        ..QpSettings::default()
    });
    solver.solve(problem, warm_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(lower: f64) -> QpProblem {
        // min ½(u-1)² s.t. u - lower ≥ 0
        let mut a = CsrMatrix::with_cols(1);
        a.push_row(&[(0, 1.0)]);
        QpProblem::new(vec![1.0], vec![-1.0], a, vec![-lower]).unwrap()
    }

    #[test]
    fn unconstrained_returns_target() {
        let p = QpProblem::new(vec![2.0, 4.0], vec![-2.0, 8.0], CsrMatrix::with_cols(2), vec![]).unwrap();
        let s = solve_sparse(&p, None, 1e-6, 100).unwrap();
        assert_eq!(s.primal, vec![1.0, -2.0]);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn one_dimensional_bound() {
        let s = solve_sparse(&one_dim(2.0), None, 1e-6, 100).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.primal[0] - 2.0).abs() < 1e-12);
        assert!((s.dual[0] - 1.0).abs() < 1e-12);
        let d = solve_dense_reference(&one_dim(2.0)).unwrap();
        assert!((d.primal[0] - 2.0).abs() < 1e-12);
        assert!((d.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_bound_keeps_target() {
        let s = solve_sparse(&one_dim(0.0), None, 1e-6, 100).unwrap();
        assert_eq!(s.primal, vec![1.0]);
        assert_eq!(s.dual, vec![0.0]);
    }

    #[test]
    fn infeasible_pair_detected() {
        let mut a = CsrMatrix::with_cols(1);
        a.push_row(&[(0, 1.0)]);
        a.push_row(&[(0, -1.0)]);
        let p = QpProblem::new(vec![1.0], vec![0.0], a, vec![-1.0, 0.0]).unwrap();
        let s = solve_sparse(&p, None, 1e-6, 5000).unwrap();
        assert_eq!(s.status, QpStatus::InfeasibleDetected);
        let d = solve_dense_reference(&p).unwrap();
        assert_eq!(d.status, QpStatus::InfeasibleDetected);
    }

    #[test]
    fn rejects_nonconvex() {
        let r = QpProblem::new(vec![0.0], vec![0.0], CsrMatrix::with_cols(1), vec![]);
        assert_eq!(r, Err(QpError::NotStrictlyConvex(0)));
    }

    #[test]
    fn warm_start_reconverges_immediately() {
        // Two coupled bounds: min ½‖u - (1, 1)‖² s.t. -u0 - u1 + 1 ≥ 0, u0 - 0.8 ≥ 0.
        let mut a = CsrMatrix::with_cols(2);
        a.push_row(&[(0, -1.0), (1, -1.0)]);
        a.push_row(&[(0, 1.0)]);
        let p = QpProblem::new(vec![1.0, 1.0], vec![-1.0, -1.0], a, vec![1.0, -0.8]).unwrap();
        let first = solve_sparse(&p, None, 1e-6, 1000).unwrap();
        assert!((first.primal[0] - 0.8).abs() < 1e-12);
        assert!((first.primal[1] - 0.2).abs() < 1e-12);
        let second = solve_sparse(&p, Some(&first), 1e-6, 1000).unwrap();
        assert!(second.iterations <= 1);
        assert_eq!(second.primal, first.primal);
    }
}
