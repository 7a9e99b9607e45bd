//! Dense dual active-set solver, kept deliberately separate from the sparse
//! path (no shared linear algebra, no shared active-set logic) so the two
//! can check each other.
//!
//! The dual of the QP is `min ½λᵀQλ + gᵀλ, λ ≥ 0` with `Q = AH⁻¹Aᵀ`. The
//! method adds the most violated row, keeps the working set's multipliers
//! non-negative with Lawson-Hanson style line searches, and swaps rows out
//! when a new row is linearly dependent on the working set. A dependent row
//! that no working-set multiplier can make room for proves infeasibility.

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpProblem, QpSolution, QpStatus};

const VIOLATION_TOL: f64 = 1e-10;
const DEPENDENCE_TOL: f64 = 1e-12;

pub fn solve_dense_reference(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let m = problem.num_rows();
    let a = DMatrix::from_fn(m, n, |i, j| problem.a.get(i, j));
    let h_inv = DVector::from_iterator(n, problem.hessian_diag.iter().map(|h| 1.0 / h));
    let u0 = DVector::from_iterator(n, problem.linear.iter().zip(&problem.hessian_diag).map(|(c, h)| -c / h));
    let b = DVector::from_column_slice(&problem.b);
    let g = &a * &u0 + &b;
    let a_hinv = DMatrix::from_fn(m, n, |i, j| a[(i, j)] * h_inv[j]);
    let q = &a_hinv * a.transpose();

    let mut lambda = DVector::<f64>::zeros(m);
    let mut working: Vec<usize> = Vec::new();
    let max_outer = 20 * m + 50;
    let primal_of = |lambda: &DVector<f64>| &u0 + a_hinv.transpose() * lambda;

    for iter in 0..max_outer {
        let u = primal_of(&lambda);
        let w = &a * &u + &b;
        let mut worst = None;
        let mut worst_ratio = 0.0;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let scale = b[i].abs() + (0..n).map(|j| (a[(i, j)] * u[j]).abs()).sum::<f64>();
            let ratio = w[i] / scale.max(f64::MIN_POSITIVE);
            if ratio < -VIOLATION_TOL && ratio < worst_ratio {
                worst_ratio = ratio;
                worst = Some(i);
            }
        }
        let Some(j) = worst else {
            return Ok(QpSolution::finish(
                problem,
                u.iter().copied().collect(),
                lambda.iter().map(|l| l.max(0.0)).collect(),
                QpStatus::Optimal,
                iter,
            ));
        };

        if !working.is_empty() {
            let k = working.len();
            let q_ff = DMatrix::from_fn(k, k, |r, c| q[(working[r], working[c])]);
            let q_fj = DVector::from_fn(k, |r, _| q[(working[r], j)]);
            let mu = q_ff
                .cholesky()
                .map(|ch| ch.solve(&q_fj))
                .ok_or_else(|| QpError::Dimension("working set lost positive definiteness".into()))?;
            let schur = q[(j, j)] - q_fj.dot(&mu);
            if schur <= DEPENDENCE_TOL * q[(j, j)] {
                // Objective decreases linearly along (e_j, -μ); a working-set
                // multiplier must hit zero first or the dual is unbounded.
                let mut step = f64::INFINITY;
                let mut leaving = None;
                for (r, &i) in working.iter().enumerate() {
                    if mu[r] > 0.0 {
                        let t = lambda[i] / mu[r];
                        if t < step {
                            step = t;
                            leaving = Some(r);
                        }
                    }
                }
                let Some(r_out) = leaving else {
                    let u = primal_of(&lambda);
                    return Ok(QpSolution::finish(
                        problem,
                        u.iter().copied().collect(),
                        lambda.iter().map(|l| l.max(0.0)).collect(),
                        QpStatus::InfeasibleDetected,
                        iter,
                    ));
                };
                for (r, &i) in working.iter().enumerate() {
                    lambda[i] -= step * mu[r];
                }
                lambda[working[r_out]] = 0.0;
                lambda[j] = step;
                working.remove(r_out);
            }
        } else if q[(j, j)] <= 0.0 {
            // Zero row with a negative constant: nothing can satisfy it.
            let u = primal_of(&lambda);
            return Ok(QpSolution::finish(
                problem,
                u.iter().copied().collect(),
                lambda.iter().copied().collect(),
                QpStatus::InfeasibleDetected,
                iter,
            ));
        }
        working.push(j);
        inner_nnls(&q, &g, &mut lambda, &mut working)?;
    }
    let u = primal_of(&lambda);
    Ok(QpSolution::finish(
        problem,
        u.iter().copied().collect(),
        lambda.iter().map(|l| l.max(0.0)).collect(),
        QpStatus::MaxIters,
        max_outer,
    ))
}

/// Moves `λ` to the minimizer over the working set, dropping rows whose
/// multipliers would turn negative.
fn inner_nnls(
    q: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: &mut DVector<f64>,
    working: &mut Vec<usize>,
) -> Result<(), QpError> {
    loop {
        let k = working.len();
        if k == 0 {
            return Ok(());
        }
        let q_ff = DMatrix::from_fn(k, k, |r, c| q[(working[r], working[c])]);
        let rhs = DVector::from_fn(k, |r, _| -g[working[r]]);
        let z = q_ff
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| QpError::Dimension("working set is linearly dependent".into()))?;
        if z.iter().all(|&v| v > 0.0) {
            for (r, &i) in working.iter().enumerate() {
                lambda[i] = z[r];
            }
            return Ok(());
        }
        let mut t = 1.0_f64;
        for (r, &i) in working.iter().enumerate() {
            if z[r] <= 0.0 {
                let denom = lambda[i] - z[r];
                if denom > 0.0 {
                    t = t.min(lambda[i] / denom);
                } else {
                    t = 0.0;
                }
            }
        }
        for (r, &i) in working.iter().enumerate() {
            lambda[i] += t * (z[r] - lambda[i]);
        }
        let before = working.len();
        working.retain(|&i| lambda[i] > 1e-15 * (1.0 + lambda[i].abs()));
        for i in 0..lambda.len() {
            if !working.contains(&i) {
                lambda[i] = 0.0;
            }
        }
        if working.len() == before {
            // t hit a zero multiplier that the filter kept; drop the
            // smallest to guarantee progress.
            if let Some((pos, _)) = working
                .iter()
                .enumerate()
                .min_by(|x, y| lambda[*x.1].total_cmp(&lambda[*y.1]))
            {
                let i = working.remove(pos);
                lambda[i] = 0.0;
            }
        }
    }
}
