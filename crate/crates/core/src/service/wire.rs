//! JSON messages exchanged on `/session`.
//!
//! Server to client: `scenario` once on join, then `state` every tick,
//! `end` when the stream is over and `error` before a forced disconnect.
//! Client to server: `input`. Every message is one text frame whose first
//! field is `type`.

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::scenario_io::{Frame, Scenario, TrajectoryRecord, Workspace};
use crate::sim::{NodeColor, QpStatusLabel, SimStats};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Scenario(ScenarioInfo),
    State(StateFrame),
    End(EndOfStream),
    Error(ErrorMessage),
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    Live,
    Replay,
}

/// Static description of the scene, sent once when a client joins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub version: u32,
    pub mode: StreamMode,
    pub name: String,
    pub hash: String,
    pub rate_hz: f64,
    pub n: usize,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub max_needle_speed: Option<f64>,
    pub workspace: Option<Workspace>,
    /// Smoothed obstacle outlines.
    pub obstacles: Vec<Vec<Point2>>,
}

impl ScenarioInfo {
    pub fn live(scenario: &Scenario) -> Self {
        ScenarioInfo {
            version: PROTOCOL_VERSION,
            mode: StreamMode::Live,
            name: scenario.name.clone(),
            hash: scenario.hash().to_string(),
            rate_hz: scenario.sim.rate_hz,
            n: scenario.params.n,
            delta: Some(scenario.params.delta),
            rho: Some(scenario.params.rho),
            max_needle_speed: Some(scenario.sim.max_needle_speed),
            workspace: Some(scenario.workspace),
            obstacles: scenario.obstacles.iter().map(|o| o.smoothed.vertices.clone()).collect(),
        }
    }

    /// Replay header; geometry comes from `scenario` when available.
    pub fn replay(record: &TrajectoryRecord, scenario: Option<&Scenario>) -> Self {
        let mut info = match scenario {
            Some(s) => ScenarioInfo::live(s),
            None => ScenarioInfo {
                version: PROTOCOL_VERSION,
                mode: StreamMode::Replay,
                name: String::new(),
                hash: record.header.scenario_hash.clone(),
                rate_hz: record.header.rate_hz,
                n: record.header.n,
                delta: None,
                rho: None,
                max_needle_speed: None,
                workspace: None,
                obstacles: Vec::new(),
            },
        };
        info.mode = StreamMode::Replay;
        info.hash = record.header.scenario_hash.clone();
        info.rate_hz = record.header.rate_hz;
        info
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub t: f64,
    pub needle: Point2,
    pub nodes: Vec<Point2>,
    /// Needle first, then each node.
    pub colors: Vec<NodeColor>,
    /// Per obstacle, m².
    pub min_h_obs: Vec<f64>,
    pub stats: FrameStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub tick_ms: f64,
    pub qp_iterations: u64,
    pub qp_status: Option<QpStatusLabel>,
    pub friction_count: usize,
    pub min_h_con: f64,
    pub slack_con: f64,
    /// Sequence number of the input driving the needle, if any.
    pub input_seq: Option<u64>,
}

impl StateFrame {
    pub fn from_frame(tick: u64, frame: &Frame, stats: Option<&SimStats>, input_seq: Option<u64>) -> Self {
        let friction_count = frame.colors.iter().filter(|c| !matches!(c, NodeColor::Green)).count();
        StateFrame {
            tick,
            t: frame.t,
            needle: frame.needle,
            nodes: frame.nodes.clone(),
            colors: frame.colors.clone(),
            min_h_obs: frame.min_h_obs.clone(),
            stats: FrameStats {
                tick_ms: stats.map_or(0.0, |s| 1e3 * s.tick_seconds),
                qp_iterations: frame.qp_iterations,
                qp_status: stats.map(|s| s.qp_status),
                friction_count: stats.map_or(friction_count, |s| s.friction_count),
                min_h_con: frame.min_h_con,
                slack_con: frame.slack_con,
                input_seq,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndOfStream {
    pub frames: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Input(InputFrame),
}

/// Needle velocity command, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFrame {
    pub vx: f64,
    pub vy: f64,
    pub seq: u64,
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<ClientMessage, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("bad message: {e}"))?;
        let ClientMessage::Input(input) = &msg;
        if !(input.vx.is_finite() && input.vy.is_finite()) {
            return Err("input velocity must be finite".into());
        }
        Ok(msg)
    }
}

/// Scales `v` down to at most `max_speed`.
pub fn clamp_speed(v: Point2, max_speed: f64) -> Point2 {
    let s = v.norm();
    if s > max_speed {
        v * (max_speed / s)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_round_trip_and_validation() {
        let msg = ClientMessage::parse(r#"{"type":"input","vx":0.001,"vy":-0.002,"seq":7}"#).unwrap();
        assert_eq!(
            msg,
            ClientMessage::Input(InputFrame {
                vx: 0.001,
                vy: -0.002,
                seq: 7
            })
        );
        assert!(ClientMessage::parse(r#"{"type":"input","vx":1,"seq":7}"#).is_err());
        assert!(ClientMessage::parse(r#"{"type":"input","vx":1,"vy":0,"seq":7,"x":0}"#).is_err());
        assert!(ClientMessage::parse(r#"{"type":"teleport","x":0}"#).is_err());
        assert!(ClientMessage::parse("not json").is_err());
    }

    #[test]
    fn type_field_leads() {
        let text = ServerMessage::End(EndOfStream {
            frames: 3,
            reason: "done".into(),
        })
        .to_text();
        assert!(text.starts_with(r#"{"type":"end","#), "{text}");
    }

    #[test]
    fn clamp() {
        let v = clamp_speed(Point2::new(3.0, 4.0), 1.0);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_eq!(clamp_speed(Point2::new(0.3, 0.4), 1.0), Point2::new(0.3, 0.4));
    }
}
