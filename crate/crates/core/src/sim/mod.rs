//! The simulation loop: friction detection from obstacle barrier values,
//! needle slow-down, colour feedback, damping, constraint assembly, QP solve
//! and explicit Euler integration.
//!
//! Internally every length is divided by a unit (Δ by default) so that the
//! QP sees `Δ = 1`; [`Simulator::state`] converts back to meters.

mod metrics;
mod run;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    assemble_with_closest, h_obs, ConstraintError, ConstraintSystem, FamilySummary, RowKind, ThreadParams, ThreadState,
};
use crate::geometry::{batch_closest_points, ClosestPointResult, Obstacle, Point2};
use crate::qp::{QpError, QpSettings, QpSolution, QpStatus, SolverCounters, SparseQpSolver};

pub use metrics::{mean_error, resample_positions, MetricsError};
pub use run::{frame_after, initial_frame, run_scripted, script_from_inputs};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn default_rate() -> f64 {
    66.0
}
fn default_kappa() -> f64 {
    0.95
}
fn default_beta() -> f64 {
    0.9
}
fn default_clearance() -> f64 {
    5e-4
}
fn default_saturation() -> usize {
    8
}
fn default_moving() -> f64 {
    1e-6
}
fn default_max_speed() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Fraction of the previous velocity kept as the next desired velocity.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Needle speed factor per node under friction.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Clearance above `ρ` below which an obstacle counts as touching, m.
    #[serde(default = "default_clearance")]
    pub friction_clearance: f64,
    /// Friction node count at which the orange shade saturates.
    #[serde(default = "default_saturation")]
    pub orange_saturation: usize,
    /// Needle command speed above which the needle counts as moving, m/s.
    #[serde(default = "default_moving")]
    pub moving_threshold: f64,
    /// Clamp applied to live needle commands, m/s.
    #[serde(default = "default_max_speed")]
    pub max_needle_speed: f64,
    /// Solve in units of Δ (recommended) rather than meters.
    #[serde(default = "default_true")]
    pub unit_scaling: bool,
    #[serde(skip)]
    pub qp: QpSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rate_hz: default_rate(),
            kappa: default_kappa(),
            beta: default_beta(),
            friction_clearance: default_clearance(),
            orange_saturation: default_saturation(),
            moving_threshold: default_moving(),
            max_needle_speed: default_max_speed(),
            unit_scaling: true,
            qp: QpSettings::default(),
        }
    }
}

impl SimConfig {
    pub fn at_rate(rate_hz: f64) -> Self {
        SimConfig {
            rate_hz,
            ..SimConfig::default()
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad("rate_hz must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.friction_clearance > 0.0 && self.friction_clearance.is_finite()) {
            return bad("friction_clearance must be positive");
        }
        if self.orange_saturation == 0 {
            return bad("orange_saturation must be at least 1");
        }
        if !(self.moving_threshold >= 0.0 && self.max_needle_speed > 0.0) {
            return bad("moving_threshold must be non-negative and max_needle_speed positive");
        }
        Ok(())
    }

    /// `½((ρ + ε_f)² - ρ²)`, the obstacle barrier value marking contact.
    pub fn friction_threshold(&self, rho: f64) -> f64 {
        let r = rho + self.friction_clearance;
        0.5 * (r * r - rho * rho)
    }
}

/// Nodes (0 = needle) touching at least two obstacles at once.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionReport {
    pub indices: Vec<usize>,
    /// `per_node_h[k][o]`, barrier value of node `k` against obstacle `o`.
    pub per_node_h: Vec<Vec<f64>>,
}

pub fn detect_friction(h_matrix: &[Vec<f64>], threshold: f64) -> FrictionReport {
    let indices = h_matrix
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().filter(|&&h| h < threshold).count() >= 2)
        .map(|(k, _)| k)
        .collect();
    FrictionReport {
        indices,
        per_node_h: h_matrix.to_vec(),
    }
}

pub fn scale_needle_speed(v0: Point2, friction_count: usize, beta: f64) -> Point2 {
    v0 * beta.powi(friction_count as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "c", rename_all = "snake_case")]
pub enum NodeColor {
    Green,
    Orange { intensity: f64 },
    Blue,
}

/// Colours of the needle and every node, needle first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorState {
    pub nodes: Vec<NodeColor>,
}

impl ColorState {
    pub fn all_green(count: usize) -> Self {
        ColorState {
            nodes: vec![NodeColor::Green; count],
        }
    }
}

/// `count` is the number of colour slots (needle plus nodes).
pub fn update_colors(report: &FrictionReport, needle_moving: bool, count: usize, saturation: usize) -> ColorState {
    let mut colors = ColorState::all_green(count);
    if report.indices.is_empty() {
        return colors;
    }
    let marked = if needle_moving {
        NodeColor::Orange {
            intensity: (report.indices.len() as f64 / saturation as f64).min(1.0),
        }
    } else {
        NodeColor::Blue
    };
    for &k in &report.indices {
        if k < count {
            colors.nodes[k] = marked;
        }
    }
    colors
}

/// Diagnostics of one tick. Barrier values are in meters² and Lyapunov
/// sums in meters⁴, evaluated at the state after the tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub tick_seconds: f64,
    pub qp_iterations: usize,
    pub qp_status: QpStatusLabel,
    pub degraded: bool,
    pub friction_count: usize,
    /// Needle velocity handed to the QP after friction scaling, m/s.
    pub needle_ref_vel: Point2,
    /// Infinity norms of each slack family (connectivity and enhanced in
    /// m²/s, stiffness in m⁴/s).
    pub slack_con: f64,
    pub slack_enh: f64,
    pub slack_stiff: f64,
    /// First connectivity slack `s₁` (m²/s).
    pub slack_first: f64,
    pub min_h_obs: Vec<f64>,
    pub min_h_con: f64,
    pub min_h_enh: f64,
    pub sum_v: f64,
    pub h_con_1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatusLabel {
    Optimal,
    MaxIters,
    Infeasible,
}

impl From<QpStatus> for QpStatusLabel {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => QpStatusLabel::Optimal,
            QpStatus::MaxIters => QpStatusLabel::MaxIters,
            QpStatus::InfeasibleDetected => QpStatusLabel::Infeasible,
        }
    }
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub colors: ColorState,
    pub stats: SimStats,
}

/// Barrier values of the current state, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub summary: FamilySummary,
    /// `h_obs[k][o]`, m².
    pub h_obs: Vec<Vec<f64>>,
    /// Distance from node `k` to obstacle `o`, m.
    pub distances: Vec<Vec<f64>>,
}

/// A stateful simulation with warm-started QP and cached closest points.
#[derive(Debug)]
pub struct Simulator {
    params: ThreadParams,
    config: SimConfig,
    obstacles: Vec<Obstacle>,
    origin: Point2,
    unit: f64,
    scaled_params: ThreadParams,
    scaled_obstacles: Vec<Obstacle>,
    state: ThreadState,
    closest: Vec<Vec<ClosestPointResult>>,
    solver: SparseQpSolver,
    warm: Option<QpSolution>,
    ticks: u64,
    degraded_ticks: u64,
    colors: ColorState,
}

impl Simulator {
    /// `initial` is in meters. The internal origin is the initial needle
    /// position.
    pub fn new(
        params: ThreadParams,
        obstacles: Vec<Obstacle>,
        initial: ThreadState,
        config: SimConfig,
    ) -> Result<Self, SimError> {
        params.validate()?;
        config.validate()?;
        initial.validate()?;
        if initial.n() != params.n {
            return Err(ConstraintError::Mismatch(format!(
                "initial state has {} nodes, params say {}",
                initial.n(),
                params.n
            ))
            .into());
        }
        let unit = if config.unit_scaling { params.delta } else { 1.0 };
        let origin = if config.unit_scaling {
            initial.needle_pos
        } else {
            Point2::ZERO
        };
        let scaled_params = params.in_length_unit(unit);
        let scaled_obstacles: Vec<Obstacle> = obstacles.iter().map(|o| o.rescaled(origin, 1.0 / unit)).collect();
        let state = initial.rescaled(origin, 1.0 / unit);
        let closest = batch_closest_points(&state.all_positions(), &scaled_obstacles);
        let mut solver = SparseQpSolver::new(config.qp);
        solver.settings = config.qp;
        let n = params.n;
        let mut sim = Simulator {
            params,
            config,
            obstacles,
            origin,
            unit,
            scaled_params,
            scaled_obstacles,
            state,
            closest,
            solver,
            warm: None,
            ticks: 0,
            degraded_ticks: 0,
            colors: ColorState::all_green(n + 1),
        };
        let report = sim.friction_report();
        sim.colors = update_colors(&report, false, n + 1, sim.config.orange_saturation);
        Ok(sim)
    }

    pub fn params(&self) -> &ThreadParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.config.dt()
    }

    pub fn degraded_ticks(&self) -> u64 {
        self.degraded_ticks
    }

    pub fn solver_counters(&self) -> SolverCounters {
        self.solver.counters()
    }

    pub fn colors(&self) -> &ColorState {
        &self.colors
    }

    /// Length unit used internally, m.
    pub fn length_unit(&self) -> f64 {
        self.unit
    }

    /// Last QP solution in internal units (velocities per `length_unit`).
    pub fn last_solution(&self) -> Option<&QpSolution> {
        self.warm.as_ref()
    }

    fn to_meters(&self, p: Point2) -> Point2 {
        self.origin + p * self.unit
    }

    /// Current state in meters.
    pub fn state(&self) -> ThreadState {
        let u = self.unit;
        ThreadState {
            needle_pos: self.to_meters(self.state.needle_pos),
            node_pos: self.state.node_pos.iter().map(|&p| self.to_meters(p)).collect(),
            needle_vel: self.state.needle_vel * u,
            node_vel: self.state.node_vel.iter().map(|&v| v * u).collect(),
            time: self.time(),
        }
    }

    /// Moves the needle to `pos` (meters) without going through the QP.
    pub fn teleport_needle(&mut self, pos: Point2) {
        self.state.needle_pos = (pos - self.origin) * (1.0 / self.unit);
        self.refresh_closest();
    }

    /// Replaces all node velocities (m/s), e.g. to start from a moving
    /// thread.
    pub fn set_velocities(&mut self, needle: Point2, nodes: &[Point2]) -> Result<(), SimError> {
        if nodes.len() != self.params.n {
            return Err(ConstraintError::Mismatch("velocity count".into()).into());
        }
        let f = 1.0 / self.unit;
        self.state.needle_vel = needle * f;
        self.state.node_vel = nodes.iter().map(|&v| v * f).collect();
        self.warm = None;
        Ok(())
    }

    fn refresh_closest(&mut self) {
        self.closest = batch_closest_points(&self.state.all_positions(), &self.scaled_obstacles);
    }

    fn scaled_h_obs(&self) -> Vec<Vec<f64>> {
        let rho = self.scaled_params.rho;
        self.closest
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let x = self.state.position(k);
                row.iter().map(|cp| h_obs(x, cp.point, rho)).collect()
            })
            .collect()
    }

    fn friction_report(&self) -> FrictionReport {
        let threshold = self.config.friction_threshold(self.params.rho) / (self.unit * self.unit);
        detect_friction(&self.scaled_h_obs(), threshold)
    }

    /// Barrier values of the current state.
    pub fn evaluate(&self) -> Result<Evaluation, SimError> {
        let system = self.assemble(Point2::ZERO)?;
        let u2 = self.unit * self.unit;
        let mut summary = system.summary();
        rescale_summary(&mut summary, u2);
        let h_obs = self
            .scaled_h_obs()
            .into_iter()
            .map(|row| row.into_iter().map(|h| h * u2).collect())
            .collect();
        let distances = self
            .closest
            .iter()
            .map(|row| row.iter().map(|cp| cp.distance * self.unit).collect())
            .collect();
        Ok(Evaluation {
            summary,
            h_obs,
            distances,
        })
    }

    fn assemble(&self, needle_ref_vel: Point2) -> Result<ConstraintSystem, SimError> {
        Ok(assemble_with_closest(
            &self.state,
            &self.closest,
            self.scaled_obstacles.len(),
            &self.scaled_params,
            needle_ref_vel,
        )?)
    }

    /// Advances one tick with needle command `user_v0` (m/s).
    pub fn step(&mut self, user_v0: Point2) -> Result<StepOutput, SimError> {
        let started = Instant::now();
        if !user_v0.is_finite() {
            return Err(SimError::NonFinite("needle command".into()));
        }
        let n = self.params.n;
        let dt = self.config.dt();

        let report = self.friction_report();
        let moving = user_v0.norm() > self.config.moving_threshold;
        let mut v0 = user_v0 * (1.0 / self.unit);
        if moving && !report.indices.is_empty() {
            v0 = scale_needle_speed(v0, report.indices.len(), self.config.beta);
        }
        let colors = update_colors(&report, moving, n + 1, self.config.orange_saturation);

        let kappa = self.config.kappa;
        let desired: Vec<Point2> = self.state.node_vel.iter().map(|&v| v * kappa).collect();
        let system = self.assemble(v0)?;
        let problem = system.qp_problem(&self.scaled_params, v0, &desired);
        let mut solution = self.solver.solve(&problem, self.warm.as_ref())?;
        if solution.primal.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite("QP solution".into()));
        }
        let degraded = solution.status != QpStatus::Optimal;
        let layout = system.layout;
        if degraded {
            self.degraded_ticks += 1;
            let first = layout.slack_col(0);
            for s in &mut solution.primal[first..] {
                *s = s.max(0.0);
            }
            log::warn!(
                "tick {}: QP returned {:?}, using best iterate",
                self.ticks,
                solution.status
            );
        }

        let u = &solution.primal;
        self.state.needle_vel = layout.velocity(u, 0);
        self.state.needle_pos += self.state.needle_vel * dt;
        for i in 1..=n {
            let v = layout.velocity(u, i);
            self.state.node_vel[i - 1] = v;
            self.state.node_pos[i - 1] += v * dt;
        }
        self.ticks += 1;
        self.state.time = self.time();
        if !self.state.all_positions().iter().all(|p| p.is_finite()) {
            return Err(SimError::NonFinite("thread state".into()));
        }
        self.refresh_closest();

        let slacks = &u[layout.slack_col(0)..];
        let inf = |s: &[f64]| s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let u2 = self.unit * self.unit;
        let u4 = u2 * u2;
        let after = self.assemble(Point2::ZERO)?;
        let mut summary = after.summary();
        rescale_summary(&mut summary, u2);
        debug_assert!(after.row_tags.iter().any(|t| t.kind == RowKind::Con));
        let stats = SimStats {
            tick_seconds: 0.0,
            qp_iterations: solution.iterations,
            qp_status: solution.status.into(),
            degraded,
            friction_count: report.indices.len(),
            needle_ref_vel: v0 * self.unit,
            slack_con: inf(&slacks[..n]) * u2,
            slack_enh: inf(&slacks[n..2 * n - 1]) * u2,
            slack_stiff: inf(&slacks[2 * n - 1..]) * u4,
            slack_first: slacks[0] * u2,
            min_h_obs: summary.min_h_obs,
            min_h_con: summary.min_h_con,
            min_h_enh: summary.min_h_enh,
            sum_v: summary.sum_v,
            h_con_1: summary.h_con_1,
        };
        self.warm = Some(solution);
        self.colors = colors.clone();
        let mut stats = stats;
        stats.tick_seconds = started.elapsed().as_secs_f64();
        Ok(StepOutput { colors, stats })
    }
}

fn rescale_summary(s: &mut FamilySummary, u2: f64) {
    s.min_h_obs.iter_mut().for_each(|h| *h *= u2);
    s.min_h_con *= u2;
    s.min_h_enh *= u2;
    s.h_con_1 *= u2;
    s.sum_v *= u2 * u2;
}

/// Single stateless tick from `state` (meters) without warm start.
pub fn step(
    state: &ThreadState,
    user_v0: Point2,
    obstacles: &[Obstacle],
    params: &ThreadParams,
    config: &SimConfig,
) -> Result<(ThreadState, ColorState, SimStats), SimError> {
    let mut sim = Simulator::new(params.clone(), obstacles.to_vec(), state.clone(), config.clone())?;
    let out = sim.step(user_v0)?;
    let mut next = sim.state();
    next.time = state.time + config.dt();
    Ok((next, out.colors, out.stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn friction_predicate() {
        let t = 1.0;
        let report = detect_friction(&[vec![5.0, 5.0, 5.0], vec![0.5, 0.5, 5.0], vec![0.5, 5.0, 5.0]], t);
        assert_eq!(report.indices, vec![1]);
        assert!(detect_friction(&vec![vec![2.0; 3]; 4], t).indices.is_empty());
    }

    #[test]
    fn needle_speed_scaling() {
        let v = Point2::new(1e-3, 0.0);
        assert_eq!(scale_needle_speed(v, 0, 0.9), v);
        let s = scale_needle_speed(v, 2, 0.9);
        assert!((s.x - 8.1e-4).abs() < 1e-18);
        let s10 = scale_needle_speed(Point2::new(1.0, 0.0), 10, 0.9);
        assert!((s10.x - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn color_table() {
        let free = FrictionReport {
            indices: vec![],
            per_node_h: vec![],
        };
        assert_eq!(update_colors(&free, true, 3, 8), ColorState::all_green(3));
        let stuck = FrictionReport {
            indices: vec![1, 2],
            per_node_h: vec![],
        };
        let moving = update_colors(&stuck, true, 4, 8);
        assert_eq!(moving.nodes[0], NodeColor::Green);
        assert_eq!(moving.nodes[1], NodeColor::Orange { intensity: 0.25 });
        let still = update_colors(&stuck, false, 4, 8);
        assert_eq!(still.nodes[2], NodeColor::Blue);
        assert_eq!(still.nodes[3], NodeColor::Green);
    }

    #[test]
    fn resting_thread_stays_put() {
        let params = ThreadParams::new(6, 1e-3, 2e-4);
        let s0 = ThreadState::straight(Point2::new(0.003, -0.002), Point2::new(1.0, 0.0), 1e-3, 6);
        let mut sim = Simulator::new(params, vec![], s0, SimConfig::default()).unwrap();
        let s0 = sim.state();
        for _ in 0..20 {
            let out = sim.step(Point2::ZERO).unwrap();
            // Rounding of the rescaled layout leaves h_con a few ulps below 0.
            assert!(out.stats.slack_con < 1e-20);
        }
        let s = sim.state();
        for (p, q) in s.all_positions().iter().zip(s0.all_positions()) {
            assert!(p.distance(q) < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SimConfig {
            beta: 1.0,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
