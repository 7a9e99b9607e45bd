//! Line-oriented trajectory files.
//!
//! ```text
//! suture-trajectory v1
//! hash <hex>
//! rate <hz>
//! n <nodes>
//! m <obstacles>
//! frames <count>
//! columns t needle.x needle.y x1 y1 .. xn yn c0 .. cn h_obs1 .. h_obsM min_h_con min_h_enh sum_v slack_con slack_enh slack_stiff qp_iters
//! <one frame per line>
//! ```
//!
//! Floats are written with 17 significant digits, which restores every
//! `f64` bit for bit. Colours are `g`, `b` or `o:<intensity>`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Point2;
use crate::sim::NodeColor;

pub const RECORD_MAGIC: &str = "suture-trajectory";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("unsupported trajectory format {found:?}, expected {RECORD_MAGIC} v{RECORD_VERSION}")]
    Version { found: String },
    #[error("truncated trajectory: {0}")]
    Truncated(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("frame {frame} does not match the header: {msg}")]
    Shape { frame: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub scenario_hash: String,
    pub rate_hz: f64,
    pub n: usize,
    pub m: usize,
}

/// One tick of a trajectory, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub needle: Point2,
    pub nodes: Vec<Point2>,
    /// Needle first, then each node.
    pub colors: Vec<NodeColor>,
    pub min_h_obs: Vec<f64>,
    pub min_h_con: f64,
    pub min_h_enh: f64,
    pub sum_v: f64,
    pub slack_con: f64,
    pub slack_enh: f64,
    pub slack_stiff: f64,
    pub qp_iterations: u64,
}

impl Frame {
    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        std::iter::once(self.needle).chain(self.nodes.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub header: RecordHeader,
    pub frames: Vec<Frame>,
}

impl TrajectoryRecord {
    pub fn new(header: RecordHeader) -> Self {
        TrajectoryRecord {
            header,
            frames: Vec::new(),
        }
    }

    /// Checks frame widths against the header and that time is monotone.
    pub fn validate(&self) -> Result<(), RecordError> {
        let (n, m) = (self.header.n, self.header.m);
        let mut last = f64::NEG_INFINITY;
        for (k, f) in self.frames.iter().enumerate() {
            let shape = |msg: String| Err(RecordError::Shape { frame: k, msg });
            if f.nodes.len() != n {
                return shape(format!("{} nodes, header says {n}", f.nodes.len()));
            }
            if f.colors.len() != n + 1 {
                return shape(format!("{} colours, expected {}", f.colors.len(), n + 1));
            }
            if f.min_h_obs.len() != m {
                return shape(format!("{} obstacle minima, header says {m}", f.min_h_obs.len()));
            }
            if !(f.t >= last) {
                return shape(format!("time {:e} after {last:e}", f.t));
            }
            last = f.t;
        }
        Ok(())
    }
}

fn push_f64(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

fn push_color(out: &mut String, c: &NodeColor) {
    match c {
        NodeColor::Green => out.push_str(" g"),
        NodeColor::Blue => out.push_str(" b"),
        NodeColor::Orange { intensity } => {
            let _ = write!(out, " o:{intensity:.16e}");
        }
    }
}

pub fn save_record(record: &TrajectoryRecord) -> Result<String, RecordError> {
    record.validate()?;
    let h = &record.header;
    let mut out = String::with_capacity(128 + record.frames.len() * (h.n + 8) * 50);
    let _ = writeln!(out, "{RECORD_MAGIC} v{RECORD_VERSION}");
    let _ = writeln!(out, "hash {}", h.scenario_hash);
    let _ = writeln!(out, "rate {:.16e}", h.rate_hz);
    let _ = writeln!(out, "n {}", h.n);
    let _ = writeln!(out, "m {}", h.m);
    let _ = writeln!(out, "frames {}", record.frames.len());
    out.push_str(&columns_line(h.n, h.m));
    out.push('\n');
    for f in &record.frames {
        let _ = write!(out, "{:.16e}", f.t);
        for p in f.positions() {
            push_f64(&mut out, p.x);
            push_f64(&mut out, p.y);
        }
        for c in &f.colors {
            push_color(&mut out, c);
        }
        for &v in f.min_h_obs.iter().chain(
            [
                f.min_h_con,
                f.min_h_enh,
                f.sum_v,
                f.slack_con,
                f.slack_enh,
                f.slack_stiff,
            ]
            .iter(),
        ) {
            push_f64(&mut out, v);
        }
        let _ = writeln!(out, " {}", f.qp_iterations);
    }
    Ok(out)
}

fn columns_line(n: usize, m: usize) -> String {
    let mut s = String::from("columns t needle.x needle.y");
    for i in 1..=n {
        let _ = write!(s, " x{i} y{i}");
    }
    for i in 0..=n {
        let _ = write!(s, " c{i}");
    }
    for o in 1..=m {
        let _ = write!(s, " h_obs{o}");
    }
    s.push_str(" min_h_con min_h_enh sum_v slack_con slack_enh slack_stiff qp_iters");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), RecordError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| RecordError::Truncated(format!("missing {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), RecordError> {
        let (line, text) = self.next_line(key)?;
        match text.split_once(' ') {
            Some((k, v)) if k == key => Ok((line, v.trim())),
            _ => Err(RecordError::Malformed {
                line,
                msg: format!("expected `{key} <value>`"),
            }),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, RecordError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| RecordError::Malformed {
        line,
        msg: format!("bad number {s:?}: {e}"),
    })
}

fn parse_color(line: usize, s: &str) -> Result<NodeColor, RecordError> {
    match s {
        "g" => Ok(NodeColor::Green),
        "b" => Ok(NodeColor::Blue),
        _ => match s.strip_prefix("o:") {
            Some(v) => Ok(NodeColor::Orange {
                intensity: parse_num(line, v)?,
            }),
            None => Err(RecordError::Malformed {
                line,
                msg: format!("bad colour {s:?}"),
            }),
        },
    }
}

pub fn load_record(text: &str) -> Result<TrajectoryRecord, RecordError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, first) = lines.next_line("format line")?;
    if first.trim() != format!("{RECORD_MAGIC} v{RECORD_VERSION}") {
        return Err(RecordError::Version {
            found: first.trim().to_string(),
        });
    }
    let (_, hash) = lines.keyed("hash")?;
    let (l, rate) = lines.keyed("rate")?;
    let rate_hz: f64 = parse_num(l, rate)?;
    let (l, n) = lines.keyed("n")?;
    let n: usize = parse_num(l, n)?;
    let (l, m) = lines.keyed("m")?;
    let m: usize = parse_num(l, m)?;
    let (l, count) = lines.keyed("frames")?;
    let count: usize = parse_num(l, count)?;
    let (l, cols) = lines.next_line("columns line")?;
    if cols != columns_line(n, m) {
        return Err(RecordError::Malformed {
            line: l,
            msg: "columns line does not match n and m".into(),
        });
    }

    let width = 1 + 2 * (n + 1) + (n + 1) + m + 7;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let (line, text) = lines.next_line(&format!("frame {k} of {count}"))?;
        let fields: Vec<&str> = text.split(' ').collect();
        if fields.len() != width {
            return Err(RecordError::Truncated(format!(
                "line {line} has {} fields, expected {width}",
                fields.len()
            )));
        }
        let mut it = fields.into_iter();
        let mut num = || -> Result<f64, RecordError> { parse_num(line, it.next().unwrap_or("")) };
        let t = num()?;
        let needle = Point2::new(num()?, num()?);
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(Point2::new(num()?, num()?));
        }
        let mut colors = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            colors.push(parse_color(line, it.next().unwrap_or(""))?);
        }
        let mut num = || -> Result<f64, RecordError> { parse_num(line, it.next().unwrap_or("")) };
        let mut min_h_obs = Vec::with_capacity(m);
        for _ in 0..m {
            min_h_obs.push(num()?);
        }
        let (min_h_con, min_h_enh, sum_v) = (num()?, num()?, num()?);
        let (slack_con, slack_enh, slack_stiff) = (num()?, num()?, num()?);
        let qp_iterations = parse_num(line, it.next().unwrap_or(""))?;
        frames.push(Frame {
            t,
            needle,
            nodes,
            colors,
            min_h_obs,
            min_h_con,
            min_h_enh,
            sum_v,
            slack_con,
            slack_enh,
            slack_stiff,
            qp_iterations,
        });
    }
    if let Some((line, extra)) = lines.inner.next() {
        if !extra.trim().is_empty() {
            return Err(RecordError::Malformed {
                line: line + 1,
                msg: format!("more frames than the {count} announced"),
            });
        }
    }
    let record = TrajectoryRecord {
        header: RecordHeader {
            scenario_hash: hash.to_string(),
            rate_hz,
            n,
            m,
        },
        frames,
    };
    record.validate()?;
    Ok(record)
}
