use std::ffi::{c_char, CStr, CString};
use std::ptr;

use suture_ffi::*;

const SMALL: &str = r#"
format_version = 1
name = "small"

[thread]
n = 6
delta = 1e-3
rho = 2e-4

[thread.initial]
needle = [0.0, 0.0]
heading = [-1.0, 0.0]

[[obstacles]]
vertices = [[2e-3, -1e-3], [4e-3, -1e-3], [4e-3, 1e-3], [2e-3, 1e-3]]

[sim]
rate_hz = 66.0
"#;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let len = unsafe { suture_last_error(buf.as_mut_ptr(), buf.len()) };
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert_eq!(len, text.len(), "message fits in the buffer");
    text
}

fn create(toml: &str) -> Result<*mut SutureSim, (SutureStatus, String)> {
    let text = CString::new(toml).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { suture_sim_from_toml(text.as_ptr(), &mut sim) };
    if status == SutureStatus::Ok {
        assert!(!sim.is_null());
        Ok(sim)
    } else {
        assert!(sim.is_null());
        Err((status, last_error()))
    }
}

#[test]
fn step_moves_needle_and_reports_state() {
    let sim = create(SMALL).unwrap();
    unsafe {
        assert_eq!(suture_sim_node_count(sim), 6);
        assert_eq!(suture_sim_obstacle_count(sim), 1);
        let mut info = std::mem::zeroed::<SutureStepInfo>();
        for _ in 0..33 {
            assert_eq!(suture_sim_step(sim, 1e-3, 0.0, &mut info), SutureStatus::Ok);
        }
        assert!((suture_sim_time(sim) - 0.5).abs() < 1e-12);
        assert!((info.time - 0.5).abs() < 1e-12);
        assert_eq!(info.qp_status, SutureQpStatus::Optimal);
        assert_eq!(info.degraded, 0);

        let mut xy = vec![0.0; 14];
        assert_eq!(suture_sim_positions(sim, xy.as_mut_ptr(), xy.len()), SutureStatus::Ok);
        // Half a second at 1 mm/s with nothing in the way.
        assert!((xy[0] - 5e-4).abs() < 1e-9, "needle x = {}", xy[0]);
        assert!(xy[1].abs() < 1e-12);

        let mut colors = vec![
            SutureColor {
                kind: SutureColorKind::Blue,
                intensity: 1.0
            };
            7
        ];
        assert_eq!(
            suture_sim_colors(sim, colors.as_mut_ptr(), colors.len()),
            SutureStatus::Ok
        );
        assert!(colors
            .iter()
            .all(|c| c.kind == SutureColorKind::Green && c.intensity == 0.0));

        let mut h = [f64::NAN];
        assert_eq!(suture_sim_min_h_obs(sim, h.as_mut_ptr(), 1), SutureStatus::Ok);
        // Needle at 0.5 mm, square face at 2 mm: ½((1.5 mm)² − ρ²).
        assert!((h[0] - 0.5 * (1.5e-3f64.powi(2) - 4e-8)).abs() < 1e-12, "{}", h[0]);
        suture_sim_free(sim);
    }
}

#[test]
fn short_buffers_and_null_handles_are_rejected() {
    let sim = create(SMALL).unwrap();
    unsafe {
        let mut xy = vec![0.0; 13];
        assert_eq!(
            suture_sim_positions(sim, xy.as_mut_ptr(), xy.len()),
            SutureStatus::BufferTooSmall
        );
        assert!(last_error().contains("14 required"));
        assert_eq!(
            suture_sim_positions(sim, ptr::null_mut(), 14),
            SutureStatus::NullPointer
        );
        assert_eq!(
            suture_sim_step(ptr::null_mut(), 0.0, 0.0, ptr::null_mut()),
            SutureStatus::NullPointer
        );
        assert_eq!(
            suture_sim_step(sim, f64::NAN, 0.0, ptr::null_mut()),
            SutureStatus::InvalidArgument
        );
        assert_eq!(suture_sim_node_count(ptr::null()), 0);
        // A successful call clears the previous message.
        assert_eq!(suture_sim_step(sim, 0.0, 0.0, ptr::null_mut()), SutureStatus::Ok);
        assert_eq!(suture_last_error(ptr::null_mut(), 0), 0);
        suture_sim_free(sim);
        suture_sim_free(ptr::null_mut());
    }
}

#[test]
fn load_failures_map_to_codes() {
    let (status, msg) = create("format_version = 1\nname = ").unwrap_err();
    assert_eq!(status, SutureStatus::Parse);
    assert!(!msg.is_empty());

    // Node 3 sits inside the square.
    let overlapping = SMALL.replace(
        "[2e-3, -1e-3], [4e-3, -1e-3], [4e-3, 1e-3], [2e-3, 1e-3]",
        "[-4e-3, -1e-3], [-2e-3, -1e-3], [-2e-3, 1e-3], [-4e-3, 1e-3]",
    );
    let (status, msg) = create(&overlapping).unwrap_err();
    assert_eq!(status, SutureStatus::Safety);
    assert!(msg.contains("h_obs"), "{msg}");

    let name = CString::new("nope").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { suture_sim_from_preset(name.as_ptr(), &mut sim) },
        SutureStatus::UnknownPreset
    );
    assert!(last_error().contains("nope"));

    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { suture_sim_from_toml(bad.as_ptr().cast(), &mut sim) },
        SutureStatus::InvalidUtf8
    );
    assert_eq!(
        unsafe { suture_sim_from_toml(ptr::null(), &mut sim) },
        SutureStatus::NullPointer
    );
}

#[test]
fn presets_load() {
    for name in ["straight", "collision", "hernia", "silk"] {
        let c = CString::new(name).unwrap();
        let mut sim = ptr::null_mut();
        assert_eq!(
            unsafe { suture_sim_from_preset(c.as_ptr(), &mut sim) },
            SutureStatus::Ok,
            "{name}"
        );
        unsafe { suture_sim_free(sim) };
    }
}

#[test]
fn last_error_truncates() {
    let _ = create("not toml at all [").unwrap_err();
    let mut small = [0x7f as c_char; 5];
    let full = unsafe { suture_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > 4);
    assert_eq!(small[4], 0);
    let text = unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len();
    assert_eq!(text, 4);
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(suture_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
