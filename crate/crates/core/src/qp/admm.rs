//! Operator-splitting (ADMM) iteration for `A U ≥ -b`, in the form used by
//! OSQP: Ruiz equilibration, relaxation, adaptive penalty and a primal
//! infeasibility certificate. The linear system in each step is reduced to
//! the row space, `(Ā D⁻¹ Āᵀ + ρ⁻¹ I) ν = r`, since the cost is diagonal.

use super::envelope::{gram, EnvelopeCholesky, EnvelopeSymbolic};
use super::sparse::CsrMatrix;
use super::QpProblem;

const SIGMA: f64 = 1e-6;
const RELAX: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_ADAPT_INTERVAL: usize = 25;
const RHO_REFACTOR_RATIO: f64 = 5.0;
const RUIZ_ITERS: usize = 10;
const CHECK_INTERVAL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AdmmStatus {
    Running,
    Converged,
    PrimalInfeasible,
}

pub(crate) struct Admm {
    // Scaled data.
    a: CsrMatrix,
    at: CsrMatrix,
    p: Vec<f64>,
    q: Vec<f64>,
    lower: Vec<f64>,
    // Scaling: x = D x̄, row i of the constraint scaled by E, cost by c.
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    b_unscaled: Vec<f64>,
    // Iterates.
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    y_prev: Vec<f64>,
    rho: f64,
    factor: EnvelopeCholesky,
    symbolic: EnvelopeSymbolic,
    iterations: usize,
    last_prim: f64,
    last_dual: f64,
    last_eps_prim: f64,
    last_eps_dual: f64,
    last_prim_norm: f64,
    last_dual_norm: f64,
    // Scratch.
    ax: Vec<f64>,
    rhs_m: Vec<f64>,
    rhs_n: Vec<f64>,
    atv: Vec<f64>,
    x_tilde: Vec<f64>,
    z_tilde: Vec<f64>,
    work: Vec<f64>,
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        (1.0 / v.sqrt()).clamp(1e-4, 1e4)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

impl Admm {
    pub(crate) fn new(problem: &QpProblem, warm: Option<(&[f64], &[f64])>) -> Self {
        let n = problem.num_vars();
        let m = problem.num_rows();
        let mut a = problem.a.clone();
        let mut p = problem.hessian_diag.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        for _ in 0..RUIZ_ITERS {
            let col = a.col_inf_norms();
            let row = a.row_inf_norms();
            let dd: Vec<f64> = (0..n).map(|j| clamp_scale(col[j].max(p[j]))).collect();
            let de: Vec<f64> = row.iter().map(|&r| clamp_scale(r)).collect();
            a.scale(&de, &dd);
            for j in 0..n {
                p[j] *= dd[j] * dd[j];
                d[j] *= dd[j];
            }
            for i in 0..m {
                e[i] *= de[i];
            }
        }
        let mut q: Vec<f64> = problem.linear.iter().zip(&d).map(|(c, dj)| c * dj).collect();
        let p_mean = p.iter().sum::<f64>() / n.max(1) as f64;
        let c = (1.0 / p_mean.max(inf_norm(&q)).max(1e-4)).clamp(1e-4, 1e4);
        p.iter_mut().for_each(|v| *v *= c);
        q.iter_mut().for_each(|v| *v *= c);
        let lower: Vec<f64> = problem.b.iter().zip(&e).map(|(b, ei)| -b * ei).collect();
        let at = a.transpose();

        let mut x = vec![0.0; n];
        let mut y = vec![0.0; m];
        if let Some((u, lambda)) = warm {
            for j in 0..n {
                x[j] = u[j] / d[j];
            }
            for i in 0..m {
                y[i] = -c * lambda[i] / e[i];
            }
        }
        let mut ax = vec![0.0; m];
        a.mul_vec(&x, &mut ax);
        let z: Vec<f64> = ax.iter().zip(&lower).map(|(v, l)| v.max(*l)).collect();

        let rho = RHO_INIT;
        let kkt = Self::reduced_matrix(&a, &at, &p, rho);
        let symbolic = EnvelopeSymbolic::analyze(&kkt);
        let factor = EnvelopeCholesky::factor_with(symbolic.clone(), &kkt)
            .expect("reduced ADMM matrix is positive definite by construction");

        Admm {
            a,
            at,
            p,
            q,
            lower,
            d,
            e,
            c,
            b_unscaled: problem.b.clone(),
            x,
            z,
            y: y.clone(),
            y_prev: y,
            rho,
            factor,
            symbolic,
            iterations: 0,
            last_prim: f64::INFINITY,
            last_dual: f64::INFINITY,
            last_eps_prim: 0.0,
            last_eps_dual: 0.0,
            last_prim_norm: 1.0,
            last_dual_norm: 1.0,
            ax,
            rhs_m: vec![0.0; m],
            rhs_n: vec![0.0; n],
            atv: vec![0.0; n],
            x_tilde: vec![0.0; n],
            z_tilde: vec![0.0; m],
            work: Vec::with_capacity(m),
        }
    }

    fn reduced_matrix(a: &CsrMatrix, at: &CsrMatrix, p: &[f64], rho: f64) -> CsrMatrix {
        let w: Vec<f64> = p.iter().map(|pj| 1.0 / (pj + SIGMA)).collect();
        let shift = vec![1.0 / rho; a.nrows()];
        gram(a, at, &w, &shift)
    }

    fn refactor(&mut self) {
        let kkt = Self::reduced_matrix(&self.a, &self.at, &self.p, self.rho);
        self.factor = EnvelopeCholesky::factor_with(self.symbolic.clone(), &kkt)
            .expect("reduced ADMM matrix is positive definite by construction");
    }

    pub(crate) fn iterations(&self) -> usize {
        self.iterations
    }

    pub(crate) fn step(&mut self, tol: f64) -> AdmmStatus {
        let n = self.x.len();
        let m = self.z.len();
        let inv_rho = 1.0 / self.rho;

        // rhs_n = σx - q
        for j in 0..n {
            self.rhs_n[j] = SIGMA * self.x[j] - self.q[j];
        }
        // rhs_m = Ā D⁻¹ rhs_n - z + ρ⁻¹ y, with D = P + σI.
        for j in 0..n {
            self.x_tilde[j] = self.rhs_n[j] / (self.p[j] + SIGMA);
        }
        self.a.mul_vec(&self.x_tilde, &mut self.rhs_m);
        for i in 0..m {
            self.rhs_m[i] += -self.z[i] + inv_rho * self.y[i];
        }
        self.factor.solve_in_place(&mut self.rhs_m, &mut self.work);
        let nu = &self.rhs_m;
        self.at.mul_vec(nu, &mut self.atv);
        for j in 0..n {
            self.x_tilde[j] = (self.rhs_n[j] - self.atv[j]) / (self.p[j] + SIGMA);
        }
        for i in 0..m {
            self.z_tilde[i] = self.z[i] + inv_rho * (nu[i] - self.y[i]);
        }

        std::mem::swap(&mut self.y_prev, &mut self.y);
        for j in 0..n {
            self.x[j] = RELAX * self.x_tilde[j] + (1.0 - RELAX) * self.x[j];
        }
        for i in 0..m {
            let w = RELAX * self.z_tilde[i] + (1.0 - RELAX) * self.z[i];
            let z_new = (w + inv_rho * self.y_prev[i]).max(self.lower[i]);
            self.y[i] = self.y_prev[i] + self.rho * (w - z_new);
            self.z[i] = z_new;
        }
        self.iterations += 1;

        if !self.iterations.is_multiple_of(CHECK_INTERVAL) {
            return AdmmStatus::Running;
        }
        self.update_residuals(tol);
        if self.last_prim <= self.last_eps_prim && self.last_dual <= self.last_eps_dual {
            return AdmmStatus::Converged;
        }
        if self.primal_infeasible(tol) {
            return AdmmStatus::PrimalInfeasible;
        }
        if self.iterations.is_multiple_of(RHO_ADAPT_INTERVAL) {
            self.adapt_rho();
        }
        AdmmStatus::Running
    }

    fn update_residuals(&mut self, tol: f64) {
        let n = self.x.len();
        let m = self.z.len();
        self.a.mul_vec(&self.x, &mut self.ax);
        let mut prim = 0.0_f64;
        let mut ax_norm = 0.0_f64;
        let mut z_norm = 0.0_f64;
        for i in 0..m {
            let ei = self.e[i];
            prim = prim.max(((self.ax[i] - self.z[i]) / ei).abs());
            ax_norm = ax_norm.max((self.ax[i] / ei).abs());
            z_norm = z_norm.max((self.z[i] / ei).abs());
        }
        self.at.mul_vec(&self.y, &mut self.atv);
        let inv_c = 1.0 / self.c;
        let mut dual = 0.0_f64;
        let mut px_norm = 0.0_f64;
        let mut aty_norm = 0.0_f64;
        let mut q_norm = 0.0_f64;
        for j in 0..n {
            let s = inv_c / self.d[j];
            let px = self.p[j] * self.x[j];
            dual = dual.max(((px + self.q[j] + self.atv[j]) * s).abs());
            px_norm = px_norm.max((px * s).abs());
            aty_norm = aty_norm.max((self.atv[j] * s).abs());
            q_norm = q_norm.max((self.q[j] * s).abs());
        }
        self.last_prim = prim;
        self.last_dual = dual;
        self.last_prim_norm = ax_norm.max(z_norm).max(1e-300);
        self.last_dual_norm = px_norm.max(aty_norm).max(q_norm).max(1e-300);
        self.last_eps_prim = tol + tol * ax_norm.max(z_norm);
        self.last_eps_dual = tol + tol * px_norm.max(aty_norm).max(q_norm);
    }

    /// `δy` with `Aᵀδy ≈ 0`, `δy ≤ 0` and `bᵀδy > 0` proves `AU + b ≥ 0`
    /// has no solution.
    fn primal_infeasible(&self, tol: f64) -> bool {
        let eps = tol.max(1e-7);
        let m = self.y.len();
        let dy: Vec<f64> = (0..m)
            .map(|i| self.e[i] * (self.y[i] - self.y_prev[i]) / self.c)
            .collect();
        let norm = inf_norm(&dy);
        if norm < 1e-300 {
            return false;
        }
        if dy.iter().any(|&v| v > eps * norm) {
            return false;
        }
        let support: f64 = dy.iter().zip(&self.b_unscaled).map(|(v, b)| v * b).sum();
        if support <= eps * norm {
            return false;
        }
        // ‖Aᵀδy‖∞ in unscaled coordinates.
        let mut dy_scaled = vec![0.0; m];
        for i in 0..m {
            dy_scaled[i] = self.y[i] - self.y_prev[i];
        }
        let mut atdy = vec![0.0; self.x.len()];
        self.at.mul_vec(&dy_scaled, &mut atdy);
        let worst = (0..atdy.len())
            .map(|j| (atdy[j] / (self.d[j] * self.c)).abs())
            .fold(0.0_f64, f64::max);
        worst <= eps * norm
    }

    fn adapt_rho(&mut self) {
        let prim_rel = self.last_prim / self.last_prim_norm;
        let dual_rel = self.last_dual / self.last_dual_norm;
        if !(prim_rel > 0.0 && dual_rel > 0.0) {
            return;
        }
        let new_rho = (self.rho * (prim_rel / dual_rel).sqrt()).clamp(RHO_MIN, RHO_MAX);
        if new_rho > self.rho * RHO_REFACTOR_RATIO || new_rho < self.rho / RHO_REFACTOR_RATIO {
            self.rho = new_rho;
            self.refactor();
        }
    }

    /// Combined residual relative to its tolerance; below one means
    /// converged.
    pub(crate) fn residual_score(&self, _tol: f64) -> f64 {
        let p = self.last_prim / self.last_eps_prim.max(1e-300);
        let d = self.last_dual / self.last_eps_dual.max(1e-300);
        p.max(d)
    }

    pub(crate) fn primal(&self) -> Vec<f64> {
        self.x.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    /// Multipliers `λ = -y` in unscaled units.
    pub(crate) fn dual(&self) -> Vec<f64> {
        self.y.iter().zip(&self.e).map(|(y, e)| -y * e / self.c).collect()
    }

    /// Rows that look active: positive multiplier or a constraint sitting at
    /// its bound.
    pub(crate) fn active_guess(&self) -> Vec<bool> {
        let lambda = self.dual();
        let scale = inf_norm(&lambda).max(1e-300);
        let mut ax = vec![0.0; self.z.len()];
        self.a.mul_vec(&self.x, &mut ax);
        (0..self.z.len())
            .map(|i| lambda[i] > 1e-9 * scale || ax[i] < self.lower[i])
            .collect()
    }
}
