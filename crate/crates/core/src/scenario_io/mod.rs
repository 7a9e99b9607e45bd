//! Scenario files (TOML), needle scripts and trajectory records.
//!
//! A scenario is validated on load: geometry must be preprocessable, the
//! initial thread must satisfy every barrier and everything must lie inside
//! the workspace box. The scenario hash is the SHA-256 of the canonical JSON
//! form of the parsed file (defaults filled in, external script inlined), so
//! it does not depend on whitespace, key order or comments.

mod presets;
mod record;
mod script;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{assemble, first_violation, RowKind, ThreadParams, ThreadState};
use crate::geometry::{point_in_polygon, GeometryError, Obstacle, Point2, Polygon, SmoothingParams};
use crate::sim::{SimConfig, SimError, Simulator};

pub use presets::{preset, PRESET_NAMES};
pub use record::{load_record, save_record, Frame, RecordError, RecordHeader, TrajectoryRecord, RECORD_VERSION};
pub use script::{format_script, parse_script, NeedleScript, ScriptSample};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported scenario format_version {found}, expected {SCENARIO_VERSION}")]
    Version { found: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("obstacle {index}: {source}")]
    Geometry {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("initial state is unsafe: {0}")]
    Safety(String),
}

impl From<SimError> for ScenarioError {
    fn from(e: SimError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    pub thread: ThreadSection,
    #[serde(default)]
    pub smoothing: SmoothingParams,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<Workspace>,
    #[serde(default)]
    pub needle: NeedleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreadSection {
    pub n: usize,
    pub delta: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_con: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_stiff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_enh_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhanced_reach: Option<f64>,
    /// `δ_2..δ_n`; a straight natural state (`2Δ`) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub natural_distances: Option<Vec<f64>>,
    pub initial: InitialSection,
}

/// Initial thread shape: explicit `nodes`, or a straight line from the
/// needle along `heading` with `spacing` (default Δ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub needle: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    /// Outline in either orientation; stored counter-clockwise.
    pub vertices: Vec<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Point2,
    pub max: Point2,
}

impl Workspace {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedleModeKind {
    Scripted,
    #[default]
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleSection {
    #[serde(default)]
    pub mode: NeedleModeKind,
    /// Inline `[t, vx, vy]` samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<NeedleScript>,
    /// Script file (`t vx vy` lines), relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NeedleMode {
    Scripted(NeedleScript),
    Interactive,
}

/// A validated, preprocessed scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub params: ThreadParams,
    pub initial: ThreadState,
    pub smoothing: SmoothingParams,
    pub obstacles: Vec<Obstacle>,
    pub sim: SimConfig,
    pub workspace: Workspace,
    pub needle_mode: NeedleMode,
    hash: String,
    file: ScenarioFile,
}

impl Scenario {
    /// Hex SHA-256 of the canonical scenario.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }

    pub fn script(&self) -> Option<&NeedleScript> {
        match &self.needle_mode {
            NeedleMode::Scripted(s) => Some(s),
            NeedleMode::Interactive => None,
        }
    }

    pub fn simulator(&self) -> Result<Simulator, SimError> {
        Simulator::new(
            self.params.clone(),
            self.obstacles.clone(),
            self.initial.clone(),
            self.sim.clone(),
        )
    }

    pub fn record_header(&self) -> RecordHeader {
        RecordHeader {
            scenario_hash: self.hash.clone(),
            rate_hz: self.sim.rate_hz,
            n: self.params.n,
            m: self.obstacles.len(),
        }
    }

    /// Builds a scenario from its file form. `base` resolves `script_file`.
    pub fn from_file(mut file: ScenarioFile, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
        if file.format_version != SCENARIO_VERSION {
            return Err(ScenarioError::Version {
                found: file.format_version,
            });
        }
        if let Some(path) = file.needle.script_file.take() {
            if file.needle.script.is_some() {
                return Err(ScenarioError::Invalid(
                    "give either needle.script or needle.script_file".into(),
                ));
            }
            let full = base.map_or_else(|| Path::new(&path).to_path_buf(), |b| b.join(&path));
            let text = std::fs::read_to_string(&full)
                .map_err(|e| ScenarioError::Parse(format!("reading {}: {e}", full.display())))?;
            let script = parse_script(&text).map_err(|e| ScenarioError::Parse(format!("{}: {e}", full.display())))?;
            file.needle.script = Some(script);
        }
        let needle_mode = match (file.needle.mode, &file.needle.script) {
            (NeedleModeKind::Scripted, Some(s)) => {
                s.validate().map_err(ScenarioError::Invalid)?;
                NeedleMode::Scripted(s.clone())
            }
            (NeedleModeKind::Scripted, None) => NeedleMode::Scripted(NeedleScript::default()),
            (NeedleModeKind::Interactive, None) => NeedleMode::Interactive,
            (NeedleModeKind::Interactive, Some(_)) => {
                return Err(ScenarioError::Invalid(
                    "interactive needle cannot carry a script".into(),
                ))
            }
        };

        let t = &file.thread;
        let mut params = ThreadParams::new(t.n, t.delta, t.rho);
        let overrides = [
            (&mut params.alpha_gain, t.alpha_gain),
            (&mut params.gamma_gain, t.gamma_gain),
            (&mut params.w_con, t.w_con),
            (&mut params.w_stiff, t.w_stiff),
            (&mut params.w_enh_ratio, t.w_enh_ratio),
            (&mut params.enhanced_reach, t.enhanced_reach),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(d) = &t.natural_distances {
            params.natural_distances = d.clone();
        }
        params.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        file.sim.validate()?;

        let init = &t.initial;
        let initial = match (&init.nodes, init.heading) {
            (Some(nodes), None) => ThreadState::at_rest(init.needle, nodes.clone()),
            (None, Some(heading)) => {
                let len = heading.norm();
                if !(len > 0.0 && len.is_finite()) {
                    return Err(ScenarioError::Invalid(
                        "initial heading must be a non-zero vector".into(),
                    ));
                }
                let spacing = init.spacing.unwrap_or(t.delta);
                ThreadState::straight(init.needle, heading * (1.0 / len), spacing, t.n)
            }
            _ => {
                return Err(ScenarioError::Invalid(
                    "thread.initial needs exactly one of `nodes` or `heading`".into(),
                ))
            }
        };
        initial.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if initial.n() != t.n {
            return Err(ScenarioError::Invalid(format!(
                "thread.initial has {} nodes, thread.n is {}",
                initial.n(),
                t.n
            )));
        }

        let smoothing = file.smoothing;
        let mut obstacles = Vec::with_capacity(file.obstacles.len());
        for (index, spec) in file.obstacles.iter().enumerate() {
            let raw = Polygon::new(spec.vertices.clone()).to_ccw();
            let obs =
                Obstacle::new(index, raw, &smoothing).map_err(|source| ScenarioError::Geometry { index, source })?;
            obstacles.push(obs);
        }

        let workspace = match file.workspace {
            Some(w) => w,
            None => default_workspace(&initial, &obstacles, t.delta),
        };
        if !(workspace.min.x < workspace.max.x && workspace.min.y < workspace.max.y) {
            return Err(ScenarioError::Invalid("workspace min must be below max".into()));
        }
        if let Some(k) = initial.all_positions().iter().position(|&p| !workspace.contains(p)) {
            return Err(ScenarioError::Invalid(format!(
                "initial node {k} lies outside the workspace"
            )));
        }
        for o in &obstacles {
            if o.raw.vertices.iter().any(|&p| !workspace.contains(p)) {
                return Err(ScenarioError::Invalid(format!(
                    "obstacle {} leaves the workspace",
                    o.id
                )));
            }
        }

        check_initial_safety(&initial, &obstacles, &params)?;

        let hash = canonical_hash(&file);
        Ok(Scenario {
            name: file.name.clone(),
            params,
            initial,
            smoothing,
            obstacles,
            sim: file.sim.clone(),
            workspace,
            needle_mode,
            hash,
            file,
        })
    }
}

fn default_workspace(initial: &ThreadState, obstacles: &[Obstacle], delta: f64) -> Workspace {
    let pts = initial
        .all_positions()
        .into_iter()
        .chain(obstacles.iter().flat_map(|o| o.raw.vertices.iter().copied()));
    let (mut min, mut max) = (
        Point2::new(f64::INFINITY, f64::INFINITY),
        Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in pts {
        min = Point2::new(min.x.min(p.x), min.y.min(p.y));
        max = Point2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let pad = Point2::new(10.0 * delta, 10.0 * delta);
    Workspace {
        min: min - pad,
        max: max + pad,
    }
}

/// Rejects an initial state with any negative barrier value (relative
/// tolerance `1e-9·Δ²` for rounding in straight-line layouts). A node buried
/// inside an obstacle can be far from its outline, so containment is
/// checked first.
fn check_initial_safety(
    initial: &ThreadState,
    obstacles: &[Obstacle],
    params: &ThreadParams,
) -> Result<(), ScenarioError> {
    for (k, p) in initial.all_positions().into_iter().enumerate() {
        if let Some(o) = obstacles.iter().find(|o| point_in_polygon(p, &o.smoothed)) {
            return Err(ScenarioError::Safety(format!(
                "h_obs row: node {k} against obstacle {} (node lies inside the obstacle)",
                o.id
            )));
        }
    }
    let system =
        assemble(initial, obstacles, params, Point2::ZERO).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let tol = 1e-9 * params.delta * params.delta;
    match first_violation(&system, tol) {
        None => Ok(()),
        Some(v) => {
            let what = match v.tag.kind {
                RowKind::Obs => format!(
                    "h_obs row: node {} against obstacle {}",
                    v.tag.index,
                    v.tag.obstacle_id.unwrap_or(0)
                ),
                RowKind::Con => format!("h_con row {}", v.tag.index),
                RowKind::ConEnh => format!("h_con_enhanced row {}", v.tag.index),
                other => format!("{other:?} row {}", v.tag.index),
            };
            Err(ScenarioError::Safety(format!("{what} = {:e} m² < 0", v.value)))
        }
    }
}

fn canonical_hash(file: &ScenarioFile) -> String {
    let json = serde_json::to_vec(file).expect("scenario serializes");
    let digest = Sha256::digest(&json);
    let mut hex = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Parses and validates a scenario; `script_file` is resolved against the
/// current directory.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Scenario::from_file(file, None)
}

/// Reads a scenario from disk, resolving `script_file` next to it.
pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(format!("reading {}: {e}", path.display())))?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
    Scenario::from_file(file, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
name = "minimal"

[thread]
n = 3
delta = 1e-3
rho = 2e-4

[thread.initial]
needle = [0.0, 0.0]
heading = [-1.0, 0.0]
"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.params, ThreadParams::new(3, 1e-3, 2e-4));
        assert_eq!(s.sim, SimConfig::default());
        assert!(s.obstacles.is_empty());
        assert_eq!(s.needle_mode, NeedleMode::Interactive);
        assert_eq!(s.initial.node_pos[2], Point2::new(-3e-3, 0.0));
        assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn hash_ignores_formatting_but_not_content() {
        let a = load_scenario(MINIMAL).unwrap();
        let b = load_scenario(&format!("# comment\n{}", MINIMAL.replace("1e-3", "0.001"))).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = load_scenario(&MINIMAL.replace("2e-4", "3e-4")).unwrap();
        assert_ne!(a.hash(), c.hash());
        let again = load_scenario(&a.to_toml()).unwrap();
        assert_eq!(again.hash(), a.hash());
    }

    #[test]
    fn overlapping_obstacle_is_named() {
        let text = format!(
            "{MINIMAL}\n[[obstacles]]\nvertices = [[-2.5e-3, -1e-3], [-1.5e-3, -1e-3], [-1.5e-3, 1e-3], [-2.5e-3, 1e-3]]\n"
        );
        match load_scenario(&text) {
            Err(ScenarioError::Safety(msg)) => assert!(msg.contains("h_obs row: node 2 against obstacle 0"), "{msg}"),
            other => panic!("expected a safety error, got {other:?}"),
        }
    }

    #[test]
    fn stretched_thread_is_rejected() {
        let text = MINIMAL.replace("heading = [-1.0, 0.0]", "heading = [-1.0, 0.0]\nspacing = 1.5e-3");
        assert!(matches!(load_scenario(&text), Err(ScenarioError::Safety(m)) if m.contains("h_con row 1")));
    }

    #[test]
    fn parse_and_version_errors() {
        assert!(matches!(load_scenario("name = 3"), Err(ScenarioError::Parse(_))));
        let v2 = MINIMAL.replace("format_version = 1", "format_version = 2");
        assert!(matches!(load_scenario(&v2), Err(ScenarioError::Version { found: 2 })));
        let unknown = MINIMAL.replace("rho = 2e-4", "rho = 2e-4\nrhoo = 1");
        assert!(matches!(load_scenario(&unknown), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn workspace_must_contain_geometry() {
        let text = format!("{MINIMAL}\n[workspace]\nmin = [-1e-3, -1e-3]\nmax = [1e-3, 1e-3]\n");
        assert!(matches!(load_scenario(&text), Err(ScenarioError::Invalid(_))));
    }
}
