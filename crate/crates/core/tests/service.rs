#![cfg(feature = "service")]

use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use suture_core::scenario_io::{preset, RecordHeader, Scenario, TrajectoryRecord};
use suture_core::service::{serve_replay, serve_session, SessionOptions};
use suture_core::sim::run_scripted;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn scenario(name: &str) -> Scenario {
    Scenario::from_file(preset(name).unwrap(), None).unwrap()
}

async fn connect(addr: std::net::SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/session"))
        .await
        .unwrap()
        .0
}

/// Next text message as JSON; `None` once the socket closes.
async fn next_json(ws: &mut Ws) -> Option<Value> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server went quiet");
        match msg {
            Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
            Some(Ok(_)) => {}
        }
    }
}

async fn send_input(ws: &mut Ws, vx: f64, vy: f64, seq: u64) {
    let text = format!(r#"{{"type":"input","vx":{vx},"vy":{vy},"seq":{seq}}}"#);
    ws.send(Message::Text(text.into())).await.unwrap();
}

/// Reads state frames until `tick` has been seen.
async fn wait_for_tick(ws: &mut Ws, tick: u64) {
    while let Some(v) = next_json(ws).await {
        if v["type"] == "state" && v["tick"].as_u64().unwrap() >= tick {
            return;
        }
    }
    panic!("stream ended before tick {tick}");
}

#[tokio::test(flavor = "multi_thread")]
async fn join_gets_header_snapshot_then_increasing_ticks() {
    let sc = scenario("straight");
    let options = SessionOptions {
        max_ticks: Some(40),
        ..SessionOptions::local()
    };
    let handle = serve_session(sc.clone(), options).await.unwrap();
    let mut ws = connect(handle.local_addr()).await;

    let hello = next_json(&mut ws).await.unwrap();
    assert_eq!(hello["type"], "scenario");
    assert_eq!(hello["mode"], "live");
    assert_eq!(hello["hash"], sc.hash());
    assert_eq!(hello["n"], 25);

    let snapshot = next_json(&mut ws).await.unwrap();
    assert_eq!(snapshot["type"], "state");
    assert_eq!(snapshot["nodes"].as_array().unwrap().len(), 25);
    assert_eq!(snapshot["colors"].as_array().unwrap().len(), 26);
    let mut last = snapshot["tick"].as_u64().unwrap();
    let mut end = None;
    while let Some(v) = next_json(&mut ws).await {
        match v["type"].as_str().unwrap() {
            "state" => {
                let tick = v["tick"].as_u64().unwrap();
                assert!(tick > last, "tick {tick} after {last}");
                last = tick;
            }
            "end" => {
                end = Some(v);
                break;
            }
            other => panic!("unexpected {other}"),
        }
    }
    let end = end.expect("end message");
    assert_eq!(last, 40);
    assert_eq!(end["frames"], 41);
    let log = handle.finish().await.unwrap();
    assert_eq!(log.inputs.len(), 40);
    assert_eq!(log.record.frames.len(), 41);
}

#[tokio::test(flavor = "multi_thread")]
async fn stale_inputs_are_ignored_and_speed_is_clamped() {
    let sc = scenario("straight");
    let max_speed = sc.sim.max_needle_speed;
    let handle = serve_session(sc, SessionOptions::local()).await.unwrap();
    let mut ws = connect(handle.local_addr()).await;
    wait_for_tick(&mut ws, 2).await;
    send_input(&mut ws, 1e-3, 0.0, 5).await;
    send_input(&mut ws, 0.0, -1e-3, 3).await;
    wait_for_tick(&mut ws, 12).await;
    send_input(&mut ws, 1e3, 0.0, 6).await;
    wait_for_tick(&mut ws, 22).await;
    let log = handle.finish().await.unwrap();

    assert!(!log.input_seqs.contains(&Some(3)), "stale seq applied");
    let applied: Vec<_> = log.inputs.iter().zip(&log.input_seqs).collect();
    assert!(applied.iter().any(|(v, s)| **s == Some(5) && v.x == 1e-3 && v.y == 0.0));
    let fast = applied.iter().find(|(_, s)| **s == Some(6)).expect("seq 6 applied");
    assert!((fast.0.norm() - max_speed).abs() <= 1e-15 * max_speed);
}

#[tokio::test(flavor = "multi_thread")]
async fn departing_client_stops_the_needle() {
    let handle = serve_session(scenario("straight"), SessionOptions::local())
        .await
        .unwrap();
    let mut driver = connect(handle.local_addr()).await;
    let mut watcher = connect(handle.local_addr()).await;
    wait_for_tick(&mut driver, 2).await;
    send_input(&mut driver, 1e-3, 0.0, 1).await;
    wait_for_tick(&mut driver, 10).await;
    driver.close(None).await.unwrap();
    drop(driver);
    // About 20 ticks pass after the close while the watcher keeps reading.
    let until = Instant::now() + Duration::from_millis(300);
    while Instant::now() < until {
        next_json(&mut watcher).await.unwrap();
    }
    let log = handle.finish().await.unwrap();
    assert!(log.inputs.iter().any(|v| v.x > 0.0));
    let trailing_zero = log.inputs.iter().rev().take_while(|v| v.norm() == 0.0).count();
    assert!(
        trailing_zero >= 10,
        "needle still driven after disconnect ({trailing_zero} idle ticks)"
    );
    assert!(log.input_seqs.last().unwrap().is_none());
}

/// True if an `error` message arrives and the socket then closes. Gives
/// up after a few hundred messages so a missing error cannot hang.
async fn error_then_close(ws: &mut Ws) -> bool {
    let mut saw_error = false;
    for _ in 0..300 {
        match next_json(ws).await {
            Some(v) if v["type"] == "error" => {
                assert!(!v["message"].as_str().unwrap().is_empty());
                saw_error = true;
            }
            Some(_) => {}
            None => return saw_error,
        }
    }
    false
}

#[tokio::test(flavor = "multi_thread")]
async fn protocol_violations_get_an_error_then_close() {
    let handle = serve_session(scenario("straight"), SessionOptions::local())
        .await
        .unwrap();
    for bad in [
        r#"{"type":"teleport","x":0}"#,
        r#"{"type":"input","vx":1,"vy":0}"#,
        r#"{"type":"input","vx":1,"vy":0,"seq":1,"extra":true}"#,
        "not json",
    ] {
        let mut ws = connect(handle.local_addr()).await;
        assert_eq!(next_json(&mut ws).await.unwrap()["type"], "scenario");
        ws.send(Message::Text(bad.into())).await.unwrap();
        assert!(error_then_close(&mut ws).await, "no error for {bad}");
    }
    let mut ws = connect(handle.local_addr()).await;
    next_json(&mut ws).await.unwrap();
    ws.send(Message::Binary(vec![1u8, 2, 3].into())).await.unwrap();
    assert!(error_then_close(&mut ws).await);
    handle.finish().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_streams_every_frame_at_the_recorded_rate() {
    let sc = scenario("collision");
    let record = run_scripted(&sc, sc.script().unwrap(), Some(33)).unwrap();
    let handle = serve_replay(&record, Some(&sc), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let mut ws = connect(handle.local_addr()).await;
    let started = Instant::now();
    let hello = next_json(&mut ws).await.unwrap();
    assert_eq!(hello["mode"], "replay");
    assert_eq!(hello["hash"], sc.hash());
    assert_eq!(hello["obstacles"].as_array().unwrap().len(), 1);
    let mut frames = Vec::new();
    let mut end = None;
    while let Some(v) = next_json(&mut ws).await {
        match v["type"].as_str().unwrap() {
            "state" => frames.push(v),
            "end" => end = Some(v),
            other => panic!("unexpected {other}"),
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert_eq!(frames.len(), record.frames.len());
    assert_eq!(end.unwrap()["frames"], 34);
    for (k, (v, f)) in frames.iter().zip(&record.frames).enumerate() {
        assert_eq!(v["tick"], k as u64);
        assert_eq!(v["t"].as_f64().unwrap().to_bits(), f.t.to_bits());
        assert_eq!(v["needle"][0].as_f64().unwrap(), f.needle.x);
    }
    // 34 frames at 66 Hz: the first is immediate, the rest one period apart.
    let expected = 33.0 / sc.sim.rate_hz;
    assert!(
        elapsed >= 0.95 * expected,
        "replayed in {elapsed} s, expected about {expected} s"
    );
    handle.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_record_ends_immediately() {
    let record = TrajectoryRecord::new(RecordHeader {
        scenario_hash: "0".repeat(64),
        rate_hz: 33.0,
        n: 3,
        m: 0,
    });
    let handle = serve_replay(&record, None, "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let mut ws = connect(handle.local_addr()).await;
    let hello = next_json(&mut ws).await.unwrap();
    assert_eq!(hello["type"], "scenario");
    assert!(hello["workspace"].is_null());
    let end = next_json(&mut ws).await.unwrap();
    assert_eq!(end["type"], "end");
    assert_eq!(end["frames"], 0);
    assert!(next_json(&mut ws).await.is_none());
    handle.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn live_session_keeps_its_tick_rate() {
    let sc = scenario("hernia");
    let rate = sc.sim.rate_hz;
    let options = SessionOptions {
        max_ticks: Some(66),
        ..SessionOptions::local()
    };
    let handle = serve_session(sc, options).await.unwrap();
    let mut clients = Vec::new();
    for _ in 0..3 {
        clients.push(connect(handle.local_addr()).await);
    }
    for ws in &mut clients {
        while next_json(ws).await.is_some() {}
    }
    let log = handle.finish().await.unwrap();
    assert!(
        log.achieved_hz >= 0.95 * rate,
        "achieved {} Hz of {rate}",
        log.achieved_hz
    );
}
