#![cfg(feature = "service")]

use std::path::Path;
use std::process::{Command, Output};

fn suture(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suture")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn preset_run_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("straight.toml");
    let out = dir.path().join("a.traj");
    let again = dir.path().join("b.traj");

    let o = suture(&["preset", "straight", "--out", path(&scenario)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    for target in [&out, &again] {
        let o = suture(&[
            "run",
            "--scenario",
            path(&scenario),
            "--out",
            path(target),
            "--ticks",
            "40",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary = String::from_utf8(o.stdout).unwrap();
        assert!(
            summary.contains("ticks=40") && summary.contains("degraded=0"),
            "{summary}"
        );
    }
    let a = std::fs::read_to_string(&out).unwrap();
    assert!(a.starts_with("suture-trajectory v1\n"));
    assert_eq!(a, std::fs::read_to_string(&again).unwrap());

    let o = suture(&[
        "compare",
        "--sim",
        path(&out),
        "--ref",
        path(&again),
        "--length",
        "0.019",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let value: f64 = text
        .trim()
        .strip_prefix("mean_error_percent=")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(value, 0.0, "{text}");
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.traj");

    // Usage errors.
    assert_eq!(suture(&[]).status.code(), Some(2));
    assert_eq!(suture(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(suture(&["preset", "nope"]).status.code(), Some(2));

    // Unreadable or malformed input.
    let missing = dir.path().join("missing.toml");
    let o = suture(&["run", "--scenario", path(&missing), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "format_version = 1\nname = [").unwrap();
    let o = suture(&["run", "--scenario", path(&broken), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    // A thread that starts inside an obstacle.
    let unsafe_scene = dir.path().join("unsafe.toml");
    std::fs::write(
        &unsafe_scene,
        r#"
format_version = 1
name = "overlap"

[thread]
n = 5
delta = 1e-3
rho = 2e-4

[thread.initial]
needle = [0.0, 0.0]
heading = [1.0, 0.0]

[[obstacles]]
vertices = [[2e-3, -1e-3], [4e-3, -1e-3], [4e-3, 1e-3], [2e-3, 1e-3]]

[needle]
mode = "scripted"
script = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
"#,
    )
    .unwrap();
    let o = suture(&["run", "--scenario", path(&unsafe_scene), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("h_obs") && err.contains("obstacle 0"), "{err}");
    assert!(!out.exists());

    // Records that do not match each other.
    let a = dir.path().join("a.traj");
    let b = dir.path().join("b.traj");
    let scene = dir.path().join("s.toml");
    assert!(suture(&["preset", "straight", "--out", path(&scene)]).status.success());
    assert!(
        suture(&["run", "--scenario", path(&scene), "--out", path(&a), "--ticks", "3"])
            .status
            .success()
    );
    let silk = dir.path().join("silk.toml");
    assert!(suture(&["preset", "silk", "--out", path(&silk)]).status.success());
    assert!(
        suture(&["run", "--scenario", path(&silk), "--out", path(&b), "--ticks", "3"])
            .status
            .success()
    );
    let o = suture(&["compare", "--sim", path(&a), "--ref", path(&b), "--length", "0.019"]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}
