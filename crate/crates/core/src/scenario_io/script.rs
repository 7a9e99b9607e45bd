use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// Tolerance, in seconds, for a sample to count as reached at a tick time.
const TIME_SLOP: f64 = 1e-9;

/// Piecewise-constant needle velocity: each sample holds from its time
/// until the next sample. Before the first sample the needle is at rest.
/// The last sample's time is the script duration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeedleScript {
    pub samples: Vec<ScriptSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct ScriptSample {
    pub t: f64,
    pub v: Point2,
}

impl From<[f64; 3]> for ScriptSample {
    fn from(a: [f64; 3]) -> Self {
        ScriptSample {
            t: a[0],
            v: Point2::new(a[1], a[2]),
        }
    }
}

impl From<ScriptSample> for [f64; 3] {
    fn from(s: ScriptSample) -> Self {
        [s.t, s.v.x, s.v.y]
    }
}

impl NeedleScript {
    pub fn new(samples: Vec<ScriptSample>) -> Self {
        NeedleScript { samples }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Number of ticks covering the script at `rate_hz`.
    pub fn ticks(&self, rate_hz: f64) -> usize {
        (self.duration() * rate_hz).round() as usize
    }

    pub fn velocity_at(&self, t: f64) -> Point2 {
        let k = self.samples.partition_point(|s| s.t <= t + TIME_SLOP);
        if k == 0 {
            Point2::ZERO
        } else {
            self.samples[k - 1].v
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.t.is_finite() && s.v.is_finite()) {
                return Err(format!("script sample {i} is not finite"));
            }
            if s.t < 0.0 {
                return Err(format!("script sample {i} has negative time"));
            }
            if i > 0 && s.t < self.samples[i - 1].t {
                return Err(format!("script sample {i} goes back in time"));
            }
        }
        Ok(())
    }
}

/// Plain-text script: one `t vx vy` triple per line, `#` starts a comment.
pub fn parse_script(text: &str) -> Result<NeedleScript, String> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(format!("line {}: expected `t vx vy`", lineno + 1));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|e| format!("line {}: bad number {f:?}: {e}", lineno + 1))?;
        }
        samples.push(ScriptSample::from(vals));
    }
    let script = NeedleScript { samples };
    script.validate()?;
    Ok(script)
}

/// Inverse of [`parse_script`]; numbers are written with 17 significant
/// digits so parsing restores them exactly.
pub fn format_script(script: &NeedleScript) -> String {
    let mut out = String::from("# t vx vy\n");
    for s in &script.samples {
        out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", s.t, s.v.x, s.v.y));
    }
    out
}
