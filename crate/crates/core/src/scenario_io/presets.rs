//! Built-in scenarios.
//!
//! - `straight`: 19 mm polyamide-like thread, 25 nodes, 66 Hz, no obstacles.
//! - `collision`: the same thread driven into and along a square block.
//! - `hernia`: 40-node thread steered through a ring split into three
//!   sectors (outer diameter 12 mm, inner 9 mm), 33 Hz.
//! - `silk`: 150 mm thread, 81 nodes, 66 Hz, no obstacles.

use crate::geometry::{Point2, SmoothingParams};
use crate::sim::SimConfig;

use super::{
    InitialSection, NeedleModeKind, NeedleScript, NeedleSection, ObstacleSpec, ScenarioFile, ScriptSample,
    ThreadSection, Workspace, SCENARIO_VERSION,
};

pub const PRESET_NAMES: [&str; 4] = ["straight", "collision", "hernia", "silk"];

pub fn preset(name: &str) -> Option<ScenarioFile> {
    match name {
        "straight" => Some(straight()),
        "collision" => Some(collision()),
        "hernia" => Some(hernia()),
        "silk" => Some(silk()),
        _ => None,
    }
}

fn script(samples: &[[f64; 3]]) -> NeedleSection {
    NeedleSection {
        mode: NeedleModeKind::Scripted,
        script: Some(NeedleScript::new(
            samples.iter().map(|&s| ScriptSample::from(s)).collect(),
        )),
        script_file: None,
    }
}

fn thread(n: usize, delta: f64, rho: f64, needle: Point2, heading: Point2) -> ThreadSection {
    ThreadSection {
        n,
        delta,
        rho,
        alpha_gain: None,
        gamma_gain: None,
        w_con: None,
        w_stiff: None,
        w_enh_ratio: None,
        enhanced_reach: None,
        natural_distances: None,
        initial: InitialSection {
            needle,
            nodes: None,
            heading: Some(heading),
            spacing: None,
        },
    }
}

fn base(name: &str, thread: ThreadSection, rate_hz: f64) -> ScenarioFile {
    ScenarioFile {
        format_version: SCENARIO_VERSION,
        name: name.into(),
        thread,
        smoothing: SmoothingParams::default(),
        obstacles: Vec::new(),
        sim: SimConfig::at_rate(rate_hz),
        workspace: None,
        needle: NeedleSection::default(),
    }
}

const POLYAMIDE_DELTA: f64 = 19e-3 / 25.0;

fn straight() -> ScenarioFile {
    let mut f = base(
        "straight",
        thread(25, POLYAMIDE_DELTA, 2e-4, Point2::ZERO, Point2::new(-1.0, 0.0)),
        66.0,
    );
    f.needle = script(&[
        [0.0, 4e-3, 0.0],
        [2.0, 3e-3, 3e-3],
        [4.0, 0.0, 4e-3],
        [6.0, -3e-3, 3e-3],
        [8.0, 3e-3, -3e-3],
        [10.0, 0.0, 0.0],
        [11.0, 0.0, 0.0],
    ]);
    f.workspace = Some(Workspace {
        min: Point2::new(-0.04, -0.03),
        max: Point2::new(0.04, 0.03),
    });
    f
}

fn collision() -> ScenarioFile {
    let mut f = base(
        "collision",
        thread(25, POLYAMIDE_DELTA, 2e-4, Point2::ZERO, Point2::new(-1.0, 0.0)),
        66.0,
    );
    let (cx, h) = (8e-3, 3e-3);
    f.obstacles = vec![ObstacleSpec {
        vertices: vec![
            Point2::new(cx - h, -h),
            Point2::new(cx + h, -h),
            Point2::new(cx + h, h),
            Point2::new(cx - h, h),
        ],
    }];
    // Push into the left face, slide up and over the top, press down on
    // it, then drag back through the starting point.
    f.needle = script(&[
        [0.0, 5e-3, 0.0],
        [6.0, 0.0, 4e-3],
        [8.0, 5e-3, -1e-3],
        [12.0, 2e-3, -5e-3],
        [16.0, -5e-3, 0.0],
        [22.0, -4e-3, -4e-3],
        [26.0, 0.0, 0.0],
        [2000.0 / 66.0, 0.0, 0.0],
    ]);
    f.workspace = Some(Workspace {
        min: Point2::new(-0.04, -0.03),
        max: Point2::new(0.04, 0.03),
    });
    f
}

/// Ring radii and gap width of the hernia fixture, m.
const RING_INNER: f64 = 4.5e-3;
const RING_OUTER: f64 = 6e-3;
const RING_GAP: f64 = 1.4e-3;
const ARC_SEGMENTS: usize = 20;

/// One ring sector between the gaps centred at `from` and `to` (radians,
/// `to > from`). Gap edges are parallel, so both radii are cut at
/// `± asin(gap / 2r)` from the gap bisector.
fn ring_sector(from: f64, to: f64) -> ObstacleSpec {
    let cut = |r: f64| (RING_GAP / (2.0 * r)).asin();
    let arc = |r: f64, a0: f64, a1: f64| -> Vec<Point2> {
        (0..=ARC_SEGMENTS)
            .map(|k| {
                let a = a0 + (a1 - a0) * k as f64 / ARC_SEGMENTS as f64;
                Point2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    };
    let mut vertices = arc(RING_OUTER, from + cut(RING_OUTER), to - cut(RING_OUTER));
    vertices.extend(arc(RING_INNER, to - cut(RING_INNER), from + cut(RING_INNER)));
    ObstacleSpec { vertices }
}

fn hernia() -> ScenarioFile {
    let mut f = base(
        "hernia",
        thread(40, 5e-4, 3e-4, Point2::new(-9e-3, 0.0), Point2::new(-1.0, 0.0)),
        33.0,
    );
    let deg = std::f64::consts::PI / 180.0;
    f.obstacles = vec![
        ring_sector(-60.0 * deg, 60.0 * deg),
        ring_sector(60.0 * deg, 180.0 * deg),
        ring_sector(180.0 * deg, 300.0 * deg),
    ];
    // In through the left gap, out through the upper-right one, then back
    // over the top so the thread wraps the upper sector; finally let go.
    f.needle = script(&[
        [0.0, 2e-3, 0.0],
        [4.5, 1e-3, 1.732e-3],
        [8.4, -2e-3, 0.0],
        [13.4, 0.0, 0.0],
        [15.4, 0.0, 0.0],
    ]);
    f.workspace = Some(Workspace {
        min: Point2::new(-0.032, -0.016),
        max: Point2::new(0.016, 0.016),
    });
    f
}

fn silk() -> ScenarioFile {
    let delta = 150e-3 / 81.0;
    let mut f = base(
        "silk",
        thread(81, delta, 5e-4, Point2::ZERO, Point2::new(-1.0, 0.0)),
        66.0,
    );
    f.needle = script(&[
        [0.0, 1e-2, 0.0],
        [2.0, 5e-3, 1e-2],
        [4.0, -1e-2, 5e-3],
        [6.0, 0.0, 0.0],
        [7.0, 0.0, 0.0],
    ]);
    f.workspace = Some(Workspace {
        min: Point2::new(-0.2, -0.1),
        max: Point2::new(0.1, 0.1),
    });
    f
}
