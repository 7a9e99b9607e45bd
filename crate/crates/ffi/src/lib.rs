//! C ABI over the suture thread simulator.
//!
//! A simulation lives behind an opaque [`SutureSim`] handle created from
//! scenario TOML or a preset name and released with [`suture_sim_free`].
//! Every fallible call returns a [`SutureStatus`]; on failure the message is
//! kept per thread and read back with [`suture_last_error`]. Panics never
//! cross the boundary.
//!
//! Positions and velocities are in meters and m/s. Array outputs are
//! ordered needle first, then nodes 1..n, with `x, y` interleaved.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use suture_core::geometry::Point2;
use suture_core::scenario_io::{load_scenario, preset, Scenario, ScenarioError};
use suture_core::sim::{NodeColor, QpStatusLabel, Simulator};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SutureStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Scenario text did not parse or failed validation.
    Parse = 3,
    /// Initial state violates a barrier constraint.
    Safety = 4,
    /// The simulation step failed.
    Runtime = 5,
    /// Output buffer shorter than required.
    BufferTooSmall = 6,
    UnknownPreset = 7,
    InvalidArgument = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SutureColorKind {
    Green = 0,
    Orange = 1,
    Blue = 2,
}

/// Colour of one slot. `intensity` is in [0, 1] for orange and 0 otherwise.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SutureColor {
    pub kind: SutureColorKind,
    pub intensity: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SutureQpStatus {
    Optimal = 0,
    MaxIters = 1,
    Infeasible = 2,
}

/// Diagnostics of the last tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SutureStepInfo {
    pub time: f64,
    pub tick_seconds: f64,
    pub qp_iterations: u64,
    pub qp_status: SutureQpStatus,
    /// Non-zero when the QP did not reach optimality.
    pub degraded: u8,
    pub friction_count: usize,
    /// m²
    pub min_h_con: f64,
    /// m²/s
    pub slack_con: f64,
}

/// Opaque simulation handle.
pub struct SutureSim {
    sim: Simulator,
    obstacles: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: SutureStatus, message: impl Into<String>) -> SutureStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> SutureStatus) -> SutureStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SutureStatus::Panic, format!("internal panic: {what}"))
        }
    }
}

unsafe fn read_str<'a>(text: *const c_char, what: &str) -> Result<&'a str, SutureStatus> {
    if text.is_null() {
        return Err(fail(SutureStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|_| fail(SutureStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn scenario_status(err: &ScenarioError) -> SutureStatus {
    match err {
        ScenarioError::Safety(_) => SutureStatus::Safety,
        _ => SutureStatus::Parse,
    }
}

unsafe fn install(scenario: Scenario, out: *mut *mut SutureSim) -> SutureStatus {
    match scenario.simulator() {
        Ok(sim) => {
            let obstacles = scenario.obstacles.len();
            *out = Box::into_raw(Box::new(SutureSim { sim, obstacles }));
            SutureStatus::Ok
        }
        Err(e) => fail(SutureStatus::Parse, e.to_string()),
    }
}

/// Creates a simulation from scenario TOML. A `script_file` reference is
/// not resolved; scripts must be inline.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns a handle to release with [`suture_sim_free`].
#[no_mangle]
pub unsafe extern "C" fn suture_sim_from_toml(toml: *const c_char, out: *mut *mut SutureSim) -> SutureStatus {
    guard(|| {
        if out.is_null() {
            return fail(SutureStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_scenario(text) {
            Ok(scenario) => install(scenario, out),
            Err(e) => fail(scenario_status(&e), e.to_string()),
        }
    })
}

/// Creates a simulation from a built-in preset (`straight`, `collision`,
/// `hernia`, `silk`).
///
/// # Safety
/// As for [`suture_sim_from_toml`].
#[no_mangle]
pub unsafe extern "C" fn suture_sim_from_preset(name: *const c_char, out: *mut *mut SutureSim) -> SutureStatus {
    guard(|| {
        if out.is_null() {
            return fail(SutureStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match read_str(name, "name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let Some(file) = preset(name) else {
            return fail(SutureStatus::UnknownPreset, format!("unknown preset `{name}`"));
        };
        match Scenario::from_file(file, None) {
            Ok(scenario) => install(scenario, out),
            Err(e) => fail(scenario_status(&e), e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_free(sim: *mut SutureSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one tick with needle velocity `(vx, vy)` in m/s. `info` may be
/// null.
///
/// # Safety
/// `sim` must be a live handle; `info`, if non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_step(
    sim: *mut SutureSim,
    vx: f64,
    vy: f64,
    info: *mut SutureStepInfo,
) -> SutureStatus {
    guard(|| {
        let Some(handle) = sim.as_mut() else {
            return fail(SutureStatus::NullPointer, "sim is null");
        };
        if !(vx.is_finite() && vy.is_finite()) {
            return fail(SutureStatus::InvalidArgument, "needle velocity must be finite");
        }
        match handle.sim.step(Point2::new(vx, vy)) {
            Ok(out) => {
                if let Some(info) = info.as_mut() {
                    let s = &out.stats;
                    *info = SutureStepInfo {
                        time: handle.sim.time(),
                        tick_seconds: s.tick_seconds,
                        qp_iterations: s.qp_iterations as u64,
                        qp_status: match s.qp_status {
                            QpStatusLabel::Optimal => SutureQpStatus::Optimal,
                            QpStatusLabel::MaxIters => SutureQpStatus::MaxIters,
                            QpStatusLabel::Infeasible => SutureQpStatus::Infeasible,
                        },
                        degraded: s.degraded as u8,
                        friction_count: s.friction_count,
                        min_h_con: s.min_h_con,
                        slack_con: s.slack_con,
                    };
                }
                SutureStatus::Ok
            }
            Err(e) => fail(SutureStatus::Runtime, e.to_string()),
        }
    })
}

/// Number of thread nodes `n`, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_node_count(sim: *const SutureSim) -> usize {
    sim.as_ref().map_or(0, |h| h.sim.params().n)
}

/// Number of obstacles, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_obstacle_count(sim: *const SutureSim) -> usize {
    sim.as_ref().map_or(0, |h| h.obstacles)
}

/// Simulated time in seconds, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_time(sim: *const SutureSim) -> f64 {
    sim.as_ref().map_or(0.0, |h| h.sim.time())
}

unsafe fn output<'a, T>(buf: *mut T, len: usize, need: usize) -> Result<&'a mut [T], SutureStatus> {
    if buf.is_null() {
        return Err(fail(SutureStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(fail(
            SutureStatus::BufferTooSmall,
            format!("output buffer holds {len} entries, {need} required"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

/// Writes `2·(n+1)` doubles: needle `x, y`, then each node.
///
/// # Safety
/// `sim` must be a live handle and `xy` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_positions(sim: *const SutureSim, xy: *mut f64, len: usize) -> SutureStatus {
    guard(|| {
        let Some(handle) = sim.as_ref() else {
            return fail(SutureStatus::NullPointer, "sim is null");
        };
        let state = handle.sim.state();
        let out = match output(xy, len, 2 * (state.node_pos.len() + 1)) {
            Ok(o) => o,
            Err(s) => return s,
        };
        for (slot, p) in out
            .chunks_exact_mut(2)
            .zip(std::iter::once(&state.needle_pos).chain(&state.node_pos))
        {
            slot[0] = p.x;
            slot[1] = p.y;
        }
        SutureStatus::Ok
    })
}

/// Writes `n+1` colours, needle first.
///
/// # Safety
/// `sim` must be a live handle and `colors` writable for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_colors(
    sim: *const SutureSim,
    colors: *mut SutureColor,
    len: usize,
) -> SutureStatus {
    guard(|| {
        let Some(handle) = sim.as_ref() else {
            return fail(SutureStatus::NullPointer, "sim is null");
        };
        let current = &handle.sim.colors().nodes;
        let out = match output(colors, len, current.len()) {
            Ok(o) => o,
            Err(s) => return s,
        };
        for (slot, c) in out.iter_mut().zip(current) {
            *slot = match *c {
                NodeColor::Green => SutureColor {
                    kind: SutureColorKind::Green,
                    intensity: 0.0,
                },
                NodeColor::Orange { intensity } => SutureColor {
                    kind: SutureColorKind::Orange,
                    intensity,
                },
                NodeColor::Blue => SutureColor {
                    kind: SutureColorKind::Blue,
                    intensity: 0.0,
                },
            };
        }
        SutureStatus::Ok
    })
}

/// Writes the minimum obstacle barrier value per obstacle (m²) over the
/// needle and all nodes.
///
/// # Safety
/// `sim` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn suture_sim_min_h_obs(sim: *const SutureSim, out: *mut f64, len: usize) -> SutureStatus {
    guard(|| {
        let Some(handle) = sim.as_ref() else {
            return fail(SutureStatus::NullPointer, "sim is null");
        };
        let buf = match output(out, len, handle.obstacles) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match handle.sim.evaluate() {
            Ok(eval) => {
                for (o, slot) in buf.iter_mut().enumerate() {
                    *slot = eval.h_obs.iter().map(|row| row[o]).fold(f64::INFINITY, f64::min);
                }
                SutureStatus::Ok
            }
            Err(e) => fail(SutureStatus::Runtime, e.to_string()),
        }
    })
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to fit) and returns the full message length in
/// bytes excluding the terminator. Returns 0 when there is no error.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn suture_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn suture_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
