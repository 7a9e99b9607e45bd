//! Barrier and Lyapunov functions of the thread model and assembly of the
//! per-tick inequality `A U + b ≥ 0`.
//!
//! Variable layout: `U = [u₀, u₁, …, u_n, s₁, …, s_{3n-2}]`, each `u_k`
//! occupying [`DIM`] columns. Row order is fixed:
//!
//! 1. obstacle rows, node-major (`k = 0..=n`, then obstacle), no slack;
//! 2. connectivity rows `i = 1..=n`, slack `s_i`;
//! 3. enhanced-connectivity rows `1..=n-1`, slack `s_{n+i}`;
//! 4. stiffness rows `1..=n-1`, slack `s_{2n-1+i}`;
//! 5. slack positivity rows `s_j ≥ 0`.
//!
//! Rows touching the needle position `x₀` only through the connectivity and
//! stiffness terms carry no `u₀` columns; the needle's motion enters their
//! `b` entry through the commanded needle velocity instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{batch_closest_points, ClosestPointResult, Obstacle, Point2, DIM};
use crate::qp::{CsrMatrix, QpProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("invalid thread parameter: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite state: {0}")]
    NonFinite(String),
}

/// Physical and controller parameters of one thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadParams {
    pub n: usize,
    /// Maximum separation of adjacent nodes, m.
    pub delta: f64,
    /// Minimum clearance to any obstacle, m.
    pub rho: f64,
    /// Natural second-neighbour distances `δ_2..δ_n` (`n - 1` entries), m.
    pub natural_distances: Vec<f64>,
    /// Linear class-K gain on barrier functions, 1/s.
    pub alpha_gain: f64,
    /// Decay rate of the stiffness Lyapunov functions, 1/s.
    pub gamma_gain: f64,
    pub w_con: f64,
    pub w_stiff: f64,
    /// Enhanced-connectivity slack weight as a fraction of `w_con`.
    pub w_enh_ratio: f64,
    /// Separation bound used by the enhanced-connectivity barriers, m.
    pub enhanced_reach: f64,
}

impl ThreadParams {
    /// Straight natural state (`δ_i = 2Δ`) and default gains and weights.
    pub fn new(n: usize, delta: f64, rho: f64) -> Self {
        ThreadParams {
            n,
            delta,
            rho,
            natural_distances: vec![2.0 * delta; n.saturating_sub(1)],
            alpha_gain: 10.0,
            gamma_gain: 5.0,
            w_con: 1e5,
            w_stiff: 1.0,
            w_enh_ratio: 0.1,
            enhanced_reach: 2.0 * delta,
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        self.validate_structure()?;
        if !(self.w_stiff > 0.0 && self.w_con >= 10.0 * self.w_stiff) {
            return Err(ConstraintError::InvalidParams(format!(
                "weights need w_stiff > 0 and w_con ≥ 10·w_stiff, got w_con = {}, w_stiff = {}",
                self.w_con, self.w_stiff
            )));
        }
        Ok(())
    }

    /// Everything [`validate`](Self::validate) checks except the weight
    /// ratio, which only holds in the unit `Δ`.
    pub fn validate_structure(&self) -> Result<(), ConstraintError> {
        let bad = |m: String| Err(ConstraintError::InvalidParams(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be non-negative, got {}", self.rho));
        }
        if self.natural_distances.len() != self.n - 1 {
            return bad(format!(
                "natural_distances needs {} entries, got {}",
                self.n - 1,
                self.natural_distances.len()
            ));
        }
        let limit = 2.0 * self.delta * (1.0 + 1e-12);
        if let Some((i, d)) = self
            .natural_distances
            .iter()
            .enumerate()
            .find(|(_, &d)| !(d > 0.0 && d <= limit))
        {
            return bad(format!("natural distance δ_{} = {d} outside (0, 2Δ]", i + 2));
        }
        if !(self.alpha_gain > 0.0 && self.gamma_gain > 0.0) {
            return bad("alpha_gain and gamma_gain must be positive".into());
        }
        if !(self.w_stiff > 0.0 && self.w_con > 0.0 && self.w_con.is_finite() && self.w_stiff.is_finite()) {
            return bad("slack weights must be positive".into());
        }
        if !(self.w_enh_ratio > 0.0 && self.w_enh_ratio.is_finite()) {
            return bad("w_enh_ratio must be positive".into());
        }
        if !(self.enhanced_reach > 0.0 && self.enhanced_reach.is_finite()) {
            return bad("enhanced_reach must be positive".into());
        }
        Ok(())
    }

    /// Diagonal slack weights in layout order.
    pub fn slack_weights(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = Vec::with_capacity(3 * n - 2);
        w.extend(std::iter::repeat_n(self.w_con, n));
        w.extend(std::iter::repeat_n(self.w_con * self.w_enh_ratio, n - 1));
        w.extend(std::iter::repeat_n(self.w_stiff, n - 1));
        w
    }

    /// The same thread expressed with `unit` meters as the length unit.
    ///
    /// Slack weights are defined for the unit `Δ`. A connectivity slack has
    /// units of length²/s and a stiffness slack length⁴/s, so keeping the QP
    /// equivalent in another unit scales them by `(unit/Δ)²` and
    /// `(unit/Δ)⁶`; with `unit = Δ` they are returned unchanged.
    pub fn in_length_unit(&self, unit: f64) -> ThreadParams {
        let f = 1.0 / unit;
        let r = unit / self.delta;
        ThreadParams {
            delta: self.delta * f,
            rho: self.rho * f,
            natural_distances: self.natural_distances.iter().map(|d| d * f).collect(),
            enhanced_reach: self.enhanced_reach * f,
            w_con: self.w_con * r * r,
            w_stiff: self.w_stiff * r.powi(6),
            ..self.clone()
        }
    }
}

/// Positions and last applied velocities of the needle and the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadState {
    pub needle_pos: Point2,
    pub node_pos: Vec<Point2>,
    pub needle_vel: Point2,
    pub node_vel: Vec<Point2>,
    pub time: f64,
}

impl ThreadState {
    /// At rest, nodes at `x₀ + k·spacing·heading` for `k = 1..=n`.
    pub fn straight(needle: Point2, heading: Point2, spacing: f64, n: usize) -> Self {
        let dir = heading * (1.0 / heading.norm());
        ThreadState::at_rest(needle, (1..=n).map(|k| needle + dir * (spacing * k as f64)).collect())
    }

    pub fn at_rest(needle_pos: Point2, node_pos: Vec<Point2>) -> Self {
        let n = node_pos.len();
        ThreadState {
            needle_pos,
            node_pos,
            needle_vel: Point2::ZERO,
            node_vel: vec![Point2::ZERO; n],
            time: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.node_pos.len()
    }

    /// `x₀, x₁, …, x_n`.
    pub fn all_positions(&self) -> Vec<Point2> {
        let mut v = Vec::with_capacity(self.n() + 1);
        v.push(self.needle_pos);
        v.extend_from_slice(&self.node_pos);
        v
    }

    pub fn position(&self, k: usize) -> Point2 {
        if k == 0 {
            self.needle_pos
        } else {
            self.node_pos[k - 1]
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.node_vel.len() != self.node_pos.len() {
            return Err(ConstraintError::Mismatch(format!(
                "{} node positions but {} node velocities",
                self.node_pos.len(),
                self.node_vel.len()
            )));
        }
        let finite = self.needle_pos.is_finite()
            && self.needle_vel.is_finite()
            && self.time.is_finite()
            && self.node_pos.iter().chain(&self.node_vel).all(|p| p.is_finite());
        if !finite {
            return Err(ConstraintError::NonFinite("thread state".into()));
        }
        Ok(())
    }

    /// Copy with positions mapped by `p -> (p - origin)·factor` and
    /// velocities by `v -> v·factor`.
    pub fn rescaled(&self, origin: Point2, factor: f64) -> ThreadState {
        ThreadState {
            needle_pos: (self.needle_pos - origin) * factor,
            node_pos: self.node_pos.iter().map(|&p| (p - origin) * factor).collect(),
            needle_vel: self.needle_vel * factor,
            node_vel: self.node_vel.iter().map(|&v| v * factor).collect(),
            time: self.time,
        }
    }
}

/// `½(Δ² - ‖x_i - x_prev‖²)`
#[inline]
pub fn h_con(xi: Point2, xprev: Point2, delta: f64) -> f64 {
    0.5 * (delta * delta - (xi - xprev).norm_squared())
}

/// Gradient of [`h_con`] with respect to `xi`; the gradient with respect to
/// `xprev` is its negative.
#[inline]
pub fn h_con_grad(xi: Point2, xprev: Point2) -> Point2 {
    -(xi - xprev)
}

/// Second-neighbour form of [`h_con`] with separation bound `reach`.
#[inline]
pub fn h_con_enhanced(xi: Point2, xprev2: Point2, reach: f64) -> f64 {
    h_con(xi, xprev2, reach)
}

/// `½(‖x_i - p_O‖² - ρ²)`
#[inline]
pub fn h_obs(xi: Point2, p_obs: Point2, rho: f64) -> f64 {
    0.5 * ((xi - p_obs).norm_squared() - rho * rho)
}

/// Gradient of [`h_obs`] with respect to `xi`, the closest point held fixed.
#[inline]
pub fn h_obs_grad(xi: Point2, p_obs: Point2) -> Point2 {
    xi - p_obs
}

/// `½(‖x_i - x_{i-2}‖² - δ_i²)²`
#[inline]
pub fn v_stiff(xi: Point2, xprev2: Point2, delta_i: f64) -> f64 {
    let q = (xi - xprev2).norm_squared() - delta_i * delta_i;
    0.5 * q * q
}

/// Gradient of [`v_stiff`] with respect to `xi`; the gradient with respect
/// to `xprev2` is its negative.
#[inline]
pub fn v_stiff_grad(xi: Point2, xprev2: Point2, delta_i: f64) -> Point2 {
    let r = xi - xprev2;
    let q = r.norm_squared() - delta_i * delta_i;
    r * (2.0 * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Obs,
    Con,
    ConEnh,
    Stiff,
    SlackPos,
}

/// Provenance of one row of the assembled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowTag {
    pub kind: RowKind,
    /// Node index for obstacle rows (0 is the needle), 1-based constraint
    /// index for connectivity, enhanced and stiffness rows, 1-based slack
    /// index for slack rows.
    pub index: usize,
    pub obstacle_id: Option<usize>,
}

impl RowTag {
    /// Nodes (0 = needle) whose velocity columns this row may touch.
    pub fn nodes(&self) -> Vec<usize> {
        match self.kind {
            RowKind::Obs => vec![self.index],
            RowKind::Con if self.index == 1 => vec![1],
            RowKind::Con => vec![self.index - 1, self.index],
            RowKind::ConEnh | RowKind::Stiff if self.index == 1 => vec![2],
            RowKind::ConEnh | RowKind::Stiff => vec![self.index - 1, self.index + 1],
            RowKind::SlackPos => vec![],
        }
    }

    /// 0-based slack column offset carried by this row, if any.
    pub fn slack(&self, n: usize) -> Option<usize> {
        match self.kind {
            RowKind::Obs => None,
            RowKind::Con => Some(self.index - 1),
            RowKind::ConEnh => Some(n + self.index - 1),
            RowKind::Stiff => Some(2 * n - 1 + self.index - 1),
            RowKind::SlackPos => Some(self.index - 1),
        }
    }
}

/// Column bookkeeping for `U = [u₀, u₁..u_n, s]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n: usize,
}

impl VariableLayout {
    pub fn velocity_col(&self, node: usize) -> usize {
        node * DIM
    }

    pub fn slack_col(&self, slack: usize) -> usize {
        (self.n + 1) * DIM + slack
    }

    pub fn num_velocity(&self) -> usize {
        (self.n + 1) * DIM
    }

    pub fn num_slack(&self) -> usize {
        3 * self.n - 2
    }

    pub fn num_vars(&self) -> usize {
        self.num_velocity() + self.num_slack()
    }

    /// Constraint rows `3n - 2 + M(n + 1)`, excluding slack positivity.
    pub fn num_constraint_rows(&self, m: usize) -> usize {
        3 * self.n - 2 + m * (self.n + 1)
    }

    pub fn num_rows(&self, m: usize) -> usize {
        self.num_constraint_rows(m) + self.num_slack()
    }

    /// Closed-form count of stored entries in `A`.
    pub fn expected_nnz(&self, m: usize) -> usize {
        let (n, d) = (self.n, DIM);
        (n - 1) * (2 * d + 1) + (d + 1) + 2 * ((n - 2) * (2 * d + 1) + (d + 1)) + m * (n + 1) * d + (3 * n - 2)
    }

    pub fn velocity(&self, u: &[f64], node: usize) -> Point2 {
        let c = self.velocity_col(node);
        Point2::new(u[c], u[c + 1])
    }
}

/// The assembled inequality system of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub row_tags: Vec<RowTag>,
    /// Barrier or Lyapunov value behind each row (0 for slack rows).
    pub h_values: Vec<f64>,
    pub layout: VariableLayout,
    pub num_obstacles: usize,
}

/// Per-family minima and sums of an assembled system.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub min_h_obs: Vec<f64>,
    pub min_h_con: f64,
    pub min_h_enh: f64,
    pub sum_v: f64,
    pub h_con_1: f64,
}

impl ConstraintSystem {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn summary(&self) -> FamilySummary {
        let mut s = FamilySummary {
            min_h_obs: vec![f64::INFINITY; self.num_obstacles],
            min_h_con: f64::INFINITY,
            min_h_enh: f64::INFINITY,
            sum_v: 0.0,
            h_con_1: f64::NAN,
        };
        for (tag, &h) in self.row_tags.iter().zip(&self.h_values) {
            match tag.kind {
                RowKind::Obs => {
                    let o = tag.obstacle_id.unwrap_or(0);
                    s.min_h_obs[o] = s.min_h_obs[o].min(h);
                }
                RowKind::Con => {
                    s.min_h_con = s.min_h_con.min(h);
                    if tag.index == 1 {
                        s.h_con_1 = h;
                    }
                }
                RowKind::ConEnh => s.min_h_enh = s.min_h_enh.min(h),
                RowKind::Stiff => s.sum_v += h,
                RowKind::SlackPos => {}
            }
        }
        s
    }

    /// QP with unit weight on velocity deviations and the thread's slack
    /// weights; `v0` is the needle target and `v_nodes` the node targets.
    pub fn qp_problem(&self, params: &ThreadParams, v0: Point2, v_nodes: &[Point2]) -> QpProblem {
        let layout = self.layout;
        let mut hessian = vec![1.0; layout.num_velocity()];
        hessian.extend(params.slack_weights());
        let mut linear = vec![0.0; layout.num_vars()];
        for (k, v) in std::iter::once(&v0).chain(v_nodes).enumerate() {
            let c = layout.velocity_col(k);
            linear[c] = -v.x;
            linear[c + 1] = -v.y;
        }
        QpProblem {
            hessian_diag: hessian,
            linear,
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

/// Computes closest points and assembles the system for `state`.
pub fn assemble(
    state: &ThreadState,
    obstacles: &[Obstacle],
    params: &ThreadParams,
    needle_ref_vel: Point2,
) -> Result<ConstraintSystem, ConstraintError> {
    let closest = batch_closest_points(&state.all_positions(), obstacles);
    assemble_with_closest(state, &closest, obstacles.len(), params, needle_ref_vel)
}

/// Assembly from precomputed closest points, `closest[k][o]` for node `k`
/// (0 = needle) against obstacle `o`.
pub fn assemble_with_closest(
    state: &ThreadState,
    closest: &[Vec<ClosestPointResult>],
    num_obstacles: usize,
    params: &ThreadParams,
    needle_ref_vel: Point2,
) -> Result<ConstraintSystem, ConstraintError> {
    params.validate_structure()?;
    state.validate()?;
    let n = params.n;
    if state.n() != n {
        return Err(ConstraintError::Mismatch(format!(
            "state has {} nodes, params say {n}",
            state.n()
        )));
    }
    if closest.len() != n + 1 || closest.iter().any(|row| row.len() != num_obstacles) {
        return Err(ConstraintError::Mismatch(format!(
            "closest points must be {} × {num_obstacles}",
            n + 1
        )));
    }
    let layout = VariableLayout { n };
    let m = num_obstacles;
    let rows = layout.num_rows(m);
    let mut a = CsrMatrix::with_capacity(layout.num_vars(), rows, layout.expected_nnz(m));
    let mut b = Vec::with_capacity(rows);
    let mut tags = Vec::with_capacity(rows);
    let mut h_values = Vec::with_capacity(rows);
    let x = |k: usize| state.position(k);
    let alpha = params.alpha_gain;
    let gamma = params.gamma_gain;
    let v0 = needle_ref_vel;
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * DIM + 1);
    let push_vec = |entries: &mut Vec<(usize, f64)>, node: usize, g: Point2| {
        let c = layout.velocity_col(node);
        entries.push((c, g.x));
        entries.push((c + 1, g.y));
    };

    for (k, row) in closest.iter().enumerate() {
        for (o, cp) in row.iter().enumerate() {
            let h = h_obs(x(k), cp.point, params.rho);
            entries.clear();
            push_vec(&mut entries, k, h_obs_grad(x(k), cp.point));
            a.push_row(&entries);
            b.push(alpha * h);
            h_values.push(h);
            tags.push(RowTag {
                kind: RowKind::Obs,
                index: k,
                obstacle_id: Some(o),
            });
        }
    }

    // Shared shape of the connectivity-like rows: barrier (or negated
    // Lyapunov) gradient on `x_i` and the opposite gradient on `x_j`, where
    // `j = 0` folds into `b` through the needle velocity.
    let mut pair_row = |kind: RowKind, index: usize, i: usize, j: usize, grad_i: Point2, rate_term: f64, value: f64| {
        entries.clear();
        let mut bi = rate_term;
        if j == 0 {
            bi += (-grad_i).dot(v0);
        } else {
            push_vec(&mut entries, j, -grad_i);
        }
        push_vec(&mut entries, i, grad_i);
        let tag = RowTag {
            kind,
            index,
            obstacle_id: None,
        };
        entries.push((layout.slack_col(tag.slack(n).unwrap()), 1.0));
        a.push_row(&entries);
        b.push(bi);
        h_values.push(value);
        tags.push(tag);
    };

    for i in 1..=n {
        let h = h_con(x(i), x(i - 1), params.delta);
        pair_row(RowKind::Con, i, i, i - 1, h_con_grad(x(i), x(i - 1)), alpha * h, h);
    }
    for i in 2..=n {
        let h = h_con_enhanced(x(i), x(i - 2), params.enhanced_reach);
        pair_row(
            RowKind::ConEnh,
            i - 1,
            i,
            i - 2,
            h_con_grad(x(i), x(i - 2)),
            alpha * h,
            h,
        );
    }
    for i in 2..=n {
        let delta_i = params.natural_distances[i - 2];
        let v = v_stiff(x(i), x(i - 2), delta_i);
        // V̇ ≤ -γV + s  ⇔  -∇V·u + (-γV - ∂V/∂x₀·v₀) + s ≥ 0
        pair_row(
            RowKind::Stiff,
            i - 1,
            i,
            i - 2,
            -v_stiff_grad(x(i), x(i - 2), delta_i),
            -gamma * v,
            v,
        );
    }
    for j in 0..layout.num_slack() {
        a.push_row(&[(layout.slack_col(j), 1.0)]);
        b.push(0.0);
        h_values.push(0.0);
        tags.push(RowTag {
            kind: RowKind::SlackPos,
            index: j + 1,
            obstacle_id: None,
        });
    }

    debug_assert_eq!(a.nnz(), layout.expected_nnz(m));
    Ok(ConstraintSystem {
        a,
        b,
        row_tags: tags,
        h_values,
        layout,
        num_obstacles: m,
    })
}

/// Finite-difference step used by [`check_gradients`], m.
pub const GRADIENT_CHECK_STEP: f64 = 1e-7;

/// Compares every analytic gradient used by [`assemble`] (including the
/// needle terms folded into `b`) with central differences of the
/// underlying function. Obstacle closest points are recomputed at every
/// perturbed position. Returns the largest relative error.
///
/// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator,
/// with `floor` one percent of the family's typical gradient size (`Δ` for
/// barriers, `Δ³` for the stiffness functions) so that vanishing gradients
/// do not divide by zero.
pub fn check_gradients(state: &ThreadState, params: &ThreadParams, obstacles: &[Obstacle]) -> f64 {
    let eps = GRADIENT_CHECK_STEP;
    let n = params.n;
    let x = |k: usize| state.position(k);
    let delta = params.delta;
    // Truncation error of the central difference on the quartic is about
    // 4Δε², so vanishing stiffness gradients need a floor well above it.
    let floor_h = 1e-2 * delta;
    let floor_v = 1e-2 * delta.powi(3);
    let mut worst = 0.0_f64;

    let mut compare = |analytic: Point2, f: &dyn Fn(Point2) -> f64, at: Point2, floor: f64| {
        for axis in 0..DIM {
            let mut plus = at;
            let mut minus = at;
            *plus.component_mut(axis) += eps;
            *minus.component_mut(axis) -= eps;
            let numeric = (f(plus) - f(minus)) / (2.0 * eps);
            let a = analytic.component(axis);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    };

    for k in 0..=n {
        for obs in obstacles {
            let xk = x(k);
            let p = crate::geometry::closest_point_on_obstacle(xk, obs).point;
            let f = |y: Point2| h_obs(y, crate::geometry::closest_point_on_obstacle(y, obs).point, params.rho);
            compare(h_obs_grad(xk, p), &f, xk, floor_h);
        }
    }
    let mut pair = |i: usize, j: usize, grad_i: Point2, f: &dyn Fn(Point2, Point2) -> f64, floor: f64| {
        let (xi, xj) = (x(i), x(j));
        compare(grad_i, &|y| f(y, xj), xi, floor);
        compare(-grad_i, &|y| f(xi, y), xj, floor);
    };
    for i in 1..=n {
        pair(
            i,
            i - 1,
            h_con_grad(x(i), x(i - 1)),
            &|a, b| h_con(a, b, delta),
            floor_h,
        );
    }
    for i in 2..=n {
        let reach = params.enhanced_reach;
        pair(
            i,
            i - 2,
            h_con_grad(x(i), x(i - 2)),
            &|a, b| h_con_enhanced(a, b, reach),
            floor_h,
        );
        let d = params.natural_distances[i - 2];
        pair(
            i,
            i - 2,
            v_stiff_grad(x(i), x(i - 2), d),
            &|a, b| v_stiff(a, b, d),
            floor_v,
        );
    }
    worst
}

/// A violated barrier found by [`first_violation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub tag: RowTag,
    pub value: f64,
}

/// First barrier row (obstacle, connectivity or enhanced connectivity)
/// whose value is below `-tolerance`, in row order.
pub fn first_violation(system: &ConstraintSystem, tolerance: f64) -> Option<Violation> {
    system
        .row_tags
        .iter()
        .zip(&system.h_values)
        .find(|(tag, &h)| matches!(tag.kind, RowKind::Obs | RowKind::Con | RowKind::ConEnh) && h < -tolerance)
        .map(|(tag, &value)| Violation { tag: *tag, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, SmoothingParams};

    fn square_obstacle(center: Point2, half: f64) -> Obstacle {
        let raw = Polygon::new(vec![
            center + Point2::new(-half, -half),
            center + Point2::new(half, -half),
            center + Point2::new(half, half),
            center + Point2::new(-half, half),
        ]);
        Obstacle::new(0, raw, &SmoothingParams::default()).unwrap()
    }

    #[test]
    fn barrier_values() {
        let d = 1e-3;
        let z = Point2::ZERO;
        assert_eq!(h_con(Point2::new(d, 0.0), z, d), 0.0);
        assert_eq!(h_con(z, z, d), 0.5 * d * d);
        assert!((h_con(Point2::new(2e-3, 0.0), z, d) + 1.5e-6).abs() < 1e-21);
        assert!((h_con_enhanced(Point2::new(2.0 * d, 0.0), z, d) + 1.5 * d * d).abs() < 1e-21);
        assert_eq!(h_obs(Point2::new(5e-4, 0.0), z, 5e-4), 0.0);
        assert_eq!(h_obs(z, z, 5e-4), -0.5 * 5e-4 * 5e-4);
        assert!((h_obs(Point2::new(1e-3, 0.0), z, 5e-4) - 3.75e-7).abs() < 1e-22);
        assert!((v_stiff(Point2::new(1e-3, 0.0), z, 2e-3) - 4.5e-12).abs() < 1e-27);
        assert_eq!(v_stiff(Point2::new(2e-3, 0.0), z, 2e-3), 0.0);
        assert_eq!(v_stiff_grad(Point2::new(0.0, 2e-3), z, 2e-3), Point2::ZERO);
    }

    #[test]
    fn counts_for_small_systems() {
        let p = ThreadParams::new(5, 1.0, 0.1);
        let s = ThreadState::straight(Point2::ZERO, Point2::new(1.0, 0.0), 1.0, 5);
        let obs = square_obstacle(Point2::new(2.0, 10.0), 1.0);
        let sys = assemble(&s, std::slice::from_ref(&obs), &p, Point2::ZERO).unwrap();
        assert_eq!(sys.a.nrows(), 32);
        assert_eq!(sys.a.ncols(), 25);
        assert_eq!(sys.a.nnz(), 84);

        let p3 = ThreadParams::new(3, 1.0, 0.1);
        let s3 = ThreadState::straight(Point2::ZERO, Point2::new(1.0, 0.0), 1.0, 3);
        let sys3 = assemble(&s3, &[], &p3, Point2::ZERO).unwrap();
        let count = |k: RowKind| sys3.row_tags.iter().filter(|t| t.kind == k).count();
        assert_eq!(count(RowKind::Con), 3);
        assert_eq!(count(RowKind::ConEnh), 2);
        assert_eq!(count(RowKind::Stiff), 2);
        assert_eq!(count(RowKind::SlackPos), 7);
    }

    #[test]
    fn resting_straight_thread_admits_zero_input() {
        let p = ThreadParams::new(6, 1e-3, 1e-4);
        let s = ThreadState::straight(Point2::new(0.01, 0.0), Point2::new(0.0, 1.0), 1e-3, 6);
        let sys = assemble(&s, &[square_obstacle(Point2::new(-0.02, 0.0), 1e-3)], &p, Point2::ZERO).unwrap();
        assert!(sys.b.iter().all(|&v| v >= 0.0), "{:?}", sys.b);
    }

    #[test]
    fn needle_velocity_folds_into_first_rows() {
        let p = ThreadParams::new(4, 1.0, 0.0);
        let s = ThreadState::straight(Point2::ZERO, Point2::new(1.0, 0.0), 1.0, 4);
        let v0 = Point2::new(-0.5, 0.0);
        let sys = assemble(&s, &[], &p, v0).unwrap();
        // Needle pulling away from node 1 lowers the connectivity margin.
        assert!((sys.b[0] - (1.0 * -0.5)).abs() < 1e-15);
        assert!(sys.a.row(0).0.iter().all(|&c| c >= DIM));
    }

    #[test]
    fn gradients_at_equilibrium_and_contact() {
        let p = ThreadParams::new(4, 1.0, 0.25);
        let s = ThreadState::straight(Point2::ZERO, Point2::new(1.0, 0.0), 1.0, 4);
        let sys = assemble(&s, &[], &p, Point2::ZERO).unwrap();
        for (k, tag) in sys.row_tags.iter().enumerate() {
            if tag.kind == RowKind::Stiff {
                let (cols, vals) = sys.a.row(k);
                for (&c, &v) in cols.iter().zip(vals) {
                    if c < sys.layout.num_velocity() {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        let obs = square_obstacle(Point2::new(0.0, -1.25), 1.0);
        let near = ThreadState::straight(Point2::new(-3.0, 0.0), Point2::new(-1.0, 0.0), 1.0, 4);
        let mut contact = near.clone();
        contact.needle_pos = Point2::new(0.0, 0.0);
        contact.node_pos[0] = Point2::new(-0.5, 0.0);
        let sys = assemble(&contact, std::slice::from_ref(&obs), &p, Point2::ZERO).unwrap();
        let cp = crate::geometry::closest_point_on_obstacle(Point2::ZERO, &obs);
        assert!((cp.distance - 0.25).abs() < 1e-12);
        let (_, vals) = sys.a.row(0);
        assert_eq!(Point2::new(vals[0], vals[1]), Point2::ZERO - cp.point);
        assert!(check_gradients(&contact, &p, std::slice::from_ref(&obs)) < 1e-5);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = ThreadParams::new(2, 1.0, 0.0);
        assert!(p.validate().is_err());
        p = ThreadParams::new(4, 1.0, 0.0);
        p.w_con = 5.0;
        assert!(p.validate().is_err());
        p = ThreadParams::new(4, 1.0, 0.0);
        p.natural_distances[1] = 2.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn mismatched_lengths_error() {
        let p = ThreadParams::new(4, 1.0, 0.0);
        let s = ThreadState::straight(Point2::ZERO, Point2::new(1.0, 0.0), 1.0, 5);
        assert!(matches!(
            assemble(&s, &[], &p, Point2::ZERO),
            Err(ConstraintError::Mismatch(_))
        ));
    }
}
