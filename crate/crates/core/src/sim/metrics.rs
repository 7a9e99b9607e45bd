//! Trajectory comparison: mean node error as a percentage of thread length.

use thiserror::Error;

use crate::geometry::Point2;
use crate::scenario_io::TrajectoryRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory has no frames")]
    Empty,
    #[error("node counts differ: {0} vs {1}")]
    NodeCount(usize, usize),
    #[error("thread length must be positive")]
    Length,
    #[error("reference covers {have:.6} s, simulation needs {need:.6} s")]
    Coverage { have: f64, need: f64 },
}

/// Node positions of `record` (nodes only, no needle) at time `t`, linearly
/// interpolated between the bracketing frames.
pub fn resample_positions(record: &TrajectoryRecord, t: f64) -> Result<Vec<Point2>, MetricsError> {
    let frames = &record.frames;
    let last = frames.last().ok_or(MetricsError::Empty)?;
    let slop = 1e-9 * (1.0 + t.abs());
    if t < frames[0].t - slop || t > last.t + slop {
        return Err(MetricsError::Coverage {
            have: last.t - frames[0].t,
            need: t - frames[0].t,
        });
    }
    let k = frames.partition_point(|f| f.t <= t);
    if k == 0 {
        return Ok(frames[0].nodes.clone());
    }
    if k == frames.len() {
        return Ok(last.nodes.clone());
    }
    let (a, b) = (&frames[k - 1], &frames[k]);
    let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
    Ok(a.nodes.iter().zip(&b.nodes).map(|(&p, &q)| p + (q - p) * w).collect())
}

/// Mean over frames and nodes of `‖x_sim − x_ref‖`, divided by
/// `thread_length`, in percent. The reference is sampled at the simulated
/// frame times, so it may be recorded at a different rate.
pub fn mean_error(
    sim: &TrajectoryRecord,
    reference: &TrajectoryRecord,
    thread_length: f64,
) -> Result<f64, MetricsError> {
    if !(thread_length > 0.0 && thread_length.is_finite()) {
        return Err(MetricsError::Length);
    }
    if sim.frames.is_empty() || reference.frames.is_empty() {
        return Err(MetricsError::Empty);
    }
    if sim.header.n != reference.header.n {
        return Err(MetricsError::NodeCount(sim.header.n, reference.header.n));
    }
    let same_clock =
        sim.frames.len() == reference.frames.len() && sim.frames.iter().zip(&reference.frames).all(|(a, b)| a.t == b.t);
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, frame) in sim.frames.iter().enumerate() {
        let resampled;
        let ref_nodes = if same_clock {
            &reference.frames[k].nodes
        } else {
            resampled = resample_positions(reference, frame.t)?;
            &resampled
        };
        for (p, q) in frame.nodes.iter().zip(ref_nodes) {
            total += p.distance(*q);
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(100.0 * total / count as f64 / thread_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_io::{Frame, RecordHeader};
    use crate::sim::NodeColor;

    fn record(rate: f64, frames: usize, pos: impl Fn(f64, usize) -> Point2) -> TrajectoryRecord {
        let n = 4;
        let mut r = TrajectoryRecord::new(RecordHeader {
            scenario_hash: String::new(),
            rate_hz: rate,
            n,
            m: 0,
        });
        for k in 0..frames {
            let t = k as f64 / rate;
            r.frames.push(Frame {
                t,
                needle: Point2::ZERO,
                nodes: (0..n).map(|i| pos(t, i)).collect(),
                colors: vec![NodeColor::Green; n + 1],
                min_h_obs: vec![],
                min_h_con: 0.0,
                min_h_enh: 0.0,
                sum_v: 0.0,
                slack_con: 0.0,
                slack_enh: 0.0,
                slack_stiff: 0.0,
                qp_iterations: 0,
            });
        }
        r
    }

    #[test]
    fn identical_is_zero() {
        let r = record(66.0, 10, |t, i| Point2::new(t, i as f64));
        assert_eq!(mean_error(&r, &r, 0.019).unwrap(), 0.0);
    }

    #[test]
    fn uniform_offset() {
        let a = record(66.0, 10, |t, i| Point2::new(t, i as f64 * 1e-3));
        let b = record(66.0, 10, |t, i| Point2::new(t, i as f64 * 1e-3 + 1.9e-3));
        let e = mean_error(&a, &b, 19e-3).unwrap();
        assert!((e - 10.0).abs() < 1e-9, "{e}");
    }

    #[test]
    fn half_rate_reference_for_linear_motion() {
        let motion = |t: f64, i: usize| Point2::new(0.01 * t + i as f64 * 1e-3, -0.02 * t);
        let shifted = |t: f64, i: usize| motion(t, i) + Point2::new(3e-4, 4e-4);
        let sim = record(66.0, 67, motion);
        let full = record(66.0, 67, shifted);
        let half = record(33.0, 34, shifted);
        let e_full = mean_error(&sim, &full, 0.019).unwrap();
        let e_half = mean_error(&sim, &half, 0.019).unwrap();
        assert!((e_full - e_half).abs() < 1e-9 * e_full, "{e_full} vs {e_half}");
    }

    #[test]
    fn errors() {
        let empty = record(66.0, 0, |_, _| Point2::ZERO);
        let r = record(66.0, 3, |_, _| Point2::ZERO);
        assert_eq!(mean_error(&empty, &r, 1.0), Err(MetricsError::Empty));
        assert_eq!(mean_error(&r, &r, 0.0), Err(MetricsError::Length));
        let short = record(66.0, 2, |_, _| Point2::ZERO);
        assert!(matches!(
            mean_error(&r, &short, 1.0),
            Err(MetricsError::Coverage { .. })
        ));
    }
}
