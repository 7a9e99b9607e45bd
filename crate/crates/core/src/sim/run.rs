use crate::geometry::Point2;
use crate::scenario_io::{Frame, NeedleScript, Scenario, ScriptSample, TrajectoryRecord};

use super::{SimError, Simulator, StepOutput};

/// Frame describing the simulator before any tick.
pub fn initial_frame(sim: &Simulator) -> Result<Frame, SimError> {
    let state = sim.state();
    let eval = sim.evaluate()?;
    Ok(Frame {
        t: state.time,
        needle: state.needle_pos,
        nodes: state.node_pos,
        colors: sim.colors().nodes.clone(),
        min_h_obs: eval.summary.min_h_obs,
        min_h_con: eval.summary.min_h_con,
        min_h_enh: eval.summary.min_h_enh,
        sum_v: eval.summary.sum_v,
        slack_con: 0.0,
        slack_enh: 0.0,
        slack_stiff: 0.0,
        qp_iterations: 0,
    })
}

/// Frame describing the simulator right after the tick that produced `out`.
pub fn frame_after(sim: &Simulator, out: &StepOutput) -> Frame {
    let state = sim.state();
    let s = &out.stats;
    Frame {
        t: state.time,
        needle: state.needle_pos,
        nodes: state.node_pos,
        colors: out.colors.nodes.clone(),
        min_h_obs: s.min_h_obs.clone(),
        min_h_con: s.min_h_con,
        min_h_enh: s.min_h_enh,
        sum_v: s.sum_v,
        slack_con: s.slack_con,
        slack_enh: s.slack_enh,
        slack_stiff: s.slack_stiff,
        qp_iterations: s.qp_iterations as u64,
    }
}

/// Plays `script` against a fresh simulator. Runs `ticks` ticks, or as many
/// as the script lasts at the scenario rate; the record holds the initial
/// frame plus one frame per tick.
pub fn run_scripted(
    scenario: &Scenario,
    script: &NeedleScript,
    ticks: Option<usize>,
) -> Result<TrajectoryRecord, SimError> {
    let mut sim = scenario.simulator()?;
    let ticks = ticks.unwrap_or_else(|| script.ticks(scenario.sim.rate_hz));
    let mut record = TrajectoryRecord::new(scenario.record_header());
    record.frames.reserve(ticks + 1);
    record.frames.push(initial_frame(&sim)?);
    for _ in 0..ticks {
        let v0 = script.velocity_at(sim.time());
        let out = sim.step(v0)?;
        record.frames.push(frame_after(&sim, &out));
    }
    Ok(record)
}

/// Script that applies `inputs[k]` during tick `k` at `rate_hz`, followed
/// by a closing zero sample at the end time.
pub fn script_from_inputs(inputs: &[Point2], rate_hz: f64) -> NeedleScript {
    let dt = 1.0 / rate_hz;
    let mut samples: Vec<ScriptSample> = inputs
        .iter()
        .enumerate()
        .map(|(k, &v)| ScriptSample { t: k as f64 * dt, v })
        .collect();
    samples.push(ScriptSample {
        t: inputs.len() as f64 * dt,
        v: Point2::ZERO,
    });
    NeedleScript::new(samples)
}
