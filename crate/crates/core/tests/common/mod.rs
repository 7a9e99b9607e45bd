//! Random thread-shaped fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suture_core::constraints::{ThreadParams, ThreadState};
use suture_core::geometry::{closest_point_on_obstacle, point_in_polygon, Obstacle, Point2, Polygon, SmoothingParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random-walk thread: steps of 0.5Δ to 1.15Δ (so some connectivity rows
/// start violated) with bounded turning.
pub fn random_thread(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> ThreadState {
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut p = Point2::new(rng.random_range(-5.0..5.0) * delta, rng.random_range(-5.0..5.0) * delta);
    let needle = p;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        heading += rng.random_range(-0.6..0.6);
        let step = rng.random_range(0.5..1.15) * delta;
        p += Point2::new(heading.cos(), heading.sin()) * step;
        nodes.push(p);
    }
    let mut s = ThreadState::at_rest(needle, nodes);
    for v in s.node_vel.iter_mut() {
        *v = random_velocity(rng, delta);
    }
    s.needle_vel = random_velocity(rng, delta);
    s
}

pub fn random_velocity(rng: &mut ChaCha8Rng, delta: f64) -> Point2 {
    Point2::new(rng.random_range(-2.0..2.0) * delta, rng.random_range(-2.0..2.0) * delta)
}

/// Random convex polygon (5 to 8 vertices) near a random node, placed so
/// every node stays at least `clearance` outside it.
pub fn random_obstacle(rng: &mut ChaCha8Rng, id: usize, state: &ThreadState, delta: f64, clearance: f64) -> Obstacle {
    let pts = state.all_positions();
    let smoothing = SmoothingParams {
        fillet_radius: 0.3 * delta,
        ..SmoothingParams::default()
    };
    loop {
        let anchor = pts[rng.random_range(0..pts.len())];
        let radius = rng.random_range(0.8..3.0) * delta;
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let gap = radius + clearance + rng.random_range(0.0..1.5) * delta;
        let center = anchor + Point2::new(ang.cos(), ang.sin()) * gap;
        let k = rng.random_range(5..=8);
        let phase: f64 = rng.random_range(0.0..1.0);
        let vertices: Vec<Point2> = (0..k)
            .map(|i| {
                let a = (i as f64 + phase + rng.random_range(-0.25..0.25)) * std::f64::consts::TAU / k as f64;
                center + Point2::new(a.cos(), a.sin()) * (radius * rng.random_range(0.8..1.0))
            })
            .collect();
        let Ok(obs) = Obstacle::new(id, Polygon::new(vertices), &smoothing) else {
            continue;
        };
        let clear = pts
            .iter()
            .all(|&p| !point_in_polygon(p, &obs.smoothed) && closest_point_on_obstacle(p, &obs).distance >= clearance);
        if clear {
            return obs;
        }
    }
}

pub struct Instance {
    pub params: ThreadParams,
    pub state: ThreadState,
    pub obstacles: Vec<Obstacle>,
    pub needle_vel: Point2,
}

/// Thread with `m` obstacles, every node at least `ρ` from each one so the
/// obstacle rows admit `u = 0`.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, delta: f64) -> Instance {
    let params = ThreadParams::new(n, delta, 0.3 * delta);
    let state = random_thread(rng, n, delta);
    let obstacles = (0..m)
        .map(|id| random_obstacle(rng, id, &state, delta, params.rho))
        .collect();
    let needle_vel = random_velocity(rng, delta);
    Instance {
        params,
        state,
        obstacles,
        needle_vel,
    }
}
