//! Live sessions over a websocket at `/session`.
//!
//! One OS thread owns the simulator and ticks on a fixed deadline schedule.
//! Socket tasks only write the input mailbox and forward frames the loop
//! publishes, so network timing cannot change what the simulation computes:
//! the per-tick applied inputs fully determine the trajectory.

mod replay;
pub mod wire;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::sync::{broadcast, oneshot, watch};

use crate::geometry::Point2;
use crate::scenario_io::{Scenario, TrajectoryRecord};
use crate::sim::{frame_after, initial_frame, SimError};
use wire::{clamp_speed, ClientMessage, EndOfStream, ErrorMessage, ScenarioInfo, ServerMessage, StateFrame};

pub use replay::{serve_replay, ReplayHandle};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("server task failed: {0}")]
    Task(String),
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub addr: SocketAddr,
    /// Stop after this many ticks; run until stopped otherwise.
    pub max_ticks: Option<u64>,
}

impl SessionOptions {
    /// Loopback on an ephemeral port.
    pub fn local() -> Self {
        SessionOptions {
            addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            max_ticks: None,
        }
    }
}

/// What the session applied and produced, for offline replay.
#[derive(Debug, Clone)]
pub struct SessionLog {
    /// Needle command applied at each tick (after clamping), m/s.
    pub inputs: Vec<Point2>,
    /// Sequence number behind each applied command, if any.
    pub input_seqs: Vec<Option<u64>>,
    pub record: TrajectoryRecord,
    /// Ticks per second actually achieved.
    pub achieved_hz: f64,
}

/// Latest command per client; the most recent fresh input wins.
#[derive(Debug, Default)]
struct Mailbox {
    command: Point2,
    source: Option<(u64, u64)>,
    last_seq: HashMap<u64, u64>,
}

impl Mailbox {
    /// Returns false for a stale sequence number.
    fn submit(&mut self, client: u64, seq: u64, v: Point2) -> bool {
        if self.last_seq.get(&client).is_some_and(|&s| seq <= s) {
            return false;
        }
        self.last_seq.insert(client, seq);
        self.command = v;
        self.source = Some((client, seq));
        true
    }

    /// A departing client's command is not left driving the needle.
    fn disconnect(&mut self, client: u64) {
        self.last_seq.remove(&client);
        if self.source.is_some_and(|(c, _)| c == client) {
            self.command = Point2::ZERO;
            self.source = None;
        }
    }

    fn sample(&self) -> (Point2, Option<u64>) {
        (self.command, self.source.map(|(_, s)| s))
    }
}

/// Frames published by the loop: `(tick, text)`.
type Published = (u64, Arc<str>);

struct Shared {
    hello: Arc<str>,
    frames: broadcast::Sender<Published>,
    latest: watch::Receiver<Published>,
    mailbox: Mutex<Mailbox>,
    max_speed: f64,
    next_client: AtomicU64,
    closing: watch::Receiver<bool>,
}

pub struct SessionHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: Option<std::thread::JoinHandle<Result<SessionLog, SimError>>>,
    shutdown: Option<oneshot::Sender<()>>,
    closing: watch::Sender<bool>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl SessionHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// True once the simulation loop has exited.
    pub fn is_finished(&self) -> bool {
        self.sim.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Stops ticking (unless the tick budget already ran out), closes all
    /// connections and returns the session log.
    pub async fn finish(mut self) -> Result<SessionLog, ServiceError> {
        self.stop.store(true, Ordering::SeqCst);
        let sim = self.sim.take().expect("finish runs once");
        let log = tokio::task::spawn_blocking(move || sim.join())
            .await
            .map_err(|e| ServiceError::Task(e.to_string()))?
            .map_err(|_| ServiceError::Task("simulation thread panicked".into()))?;
        let _ = self.closing.send(true);
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.server).await;
        Ok(log?)
    }
}

/// Starts a live session for `scenario`. Any needle script in the scenario
/// is ignored; the needle follows client input.
pub async fn serve_session(scenario: Scenario, options: SessionOptions) -> Result<SessionHandle, ServiceError> {
    let listener = tokio::net::TcpListener::bind(options.addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: options.addr,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServiceError::Bind {
        addr: options.addr,
        source,
    })?;

    let mut sim = scenario.simulator()?;
    let first = initial_frame(&sim)?;
    let first_text: Arc<str> = ServerMessage::State(StateFrame::from_frame(0, &first, None, None))
        .to_text()
        .into();
    let (frames_tx, _) = broadcast::channel::<Published>(64);
    let (latest_tx, latest_rx) = watch::channel::<Published>((0, first_text));
    let (closing_tx, closing_rx) = watch::channel(false);
    let shared = Arc::new(Shared {
        hello: ServerMessage::Scenario(ScenarioInfo::live(&scenario)).to_text().into(),
        frames: frames_tx.clone(),
        latest: latest_rx,
        mailbox: Mutex::new(Mailbox::default()),
        max_speed: scenario.sim.max_needle_speed,
        next_client: AtomicU64::new(1),
        closing: closing_rx,
    });

    let stop = Arc::new(AtomicBool::new(false));
    let loop_shared = Arc::clone(&shared);
    let loop_stop = Arc::clone(&stop);
    let header = scenario.record_header();
    let max_ticks = options.max_ticks;
    let sim_thread = std::thread::Builder::new()
        .name("suture-sim".into())
        .spawn(move || {
            let mut record = TrajectoryRecord::new(header);
            record.frames.push(first);
            let mut inputs = Vec::new();
            let mut input_seqs = Vec::new();
            let dt = Duration::from_secs_f64(sim.config().dt());
            let mut epoch = Instant::now();
            let mut epoch_tick = 0u64;
            let started = epoch;
            let mut outcome = Ok(());
            let mut tick = 0u64;
            while !loop_stop.load(Ordering::SeqCst) && max_ticks.is_none_or(|m| tick < m) {
                let deadline = epoch + dt * (tick + 1 - epoch_tick) as u32;
                let now = Instant::now();
                if deadline > now {
                    std::thread::sleep(deadline - now);
                } else if now - deadline > dt * 5 {
                    log::warn!("simulation fell {:?} behind schedule, resetting pacing", now - deadline);
                    epoch = now;
                    epoch_tick = tick + 1;
                }
                let (command, seq) = loop_shared.mailbox.lock().map(|m| m.sample()).unwrap_or_default();
                let out = match sim.step(command) {
                    Ok(out) => out,
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                };
                tick += 1;
                inputs.push(command);
                input_seqs.push(seq);
                let frame = frame_after(&sim, &out);
                let text: Arc<str> = ServerMessage::State(StateFrame::from_frame(tick, &frame, Some(&out.stats), seq))
                    .to_text()
                    .into();
                record.frames.push(frame);
                latest_tx.send_replace((tick, Arc::clone(&text)));
                let _ = frames_tx.send((tick, text));
            }
            let reason = match &outcome {
                Ok(()) if loop_stop.load(Ordering::SeqCst) => "stopped".to_string(),
                Ok(()) => "tick budget reached".to_string(),
                Err(e) => format!("simulation error: {e}"),
            };
            let end: Arc<str> = ServerMessage::End(EndOfStream {
                frames: record.frames.len() as u64,
                reason,
            })
            .to_text()
            .into();
            latest_tx.send_replace((u64::MAX, Arc::clone(&end)));
            let _ = frames_tx.send((u64::MAX, end));
            outcome?;
            let elapsed = started.elapsed().as_secs_f64();
            Ok(SessionLog {
                achieved_hz: if elapsed > 0.0 { tick as f64 / elapsed } else { 0.0 },
                inputs,
                input_seqs,
                record,
            })
        })
        .map_err(|e| ServiceError::Task(e.to_string()))?;

    let app = Router::new().route("/session", get(upgrade)).with_state(shared);
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await
    });
    Ok(SessionHandle {
        addr,
        stop,
        sim: Some(sim_thread),
        shutdown: Some(shutdown_tx),
        closing: closing_tx,
        server,
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| client_session(socket, shared))
}

async fn client_session(socket: WebSocket, shared: Arc<Shared>) {
    let client = shared.next_client.fetch_add(1, Ordering::Relaxed);
    // Subscribe before reading the snapshot so no tick falls in between.
    let mut frames = shared.frames.subscribe();
    let (snapshot_tick, snapshot) = shared.latest.borrow().clone();
    let mut closing = shared.closing.clone();
    let (mut tx, mut rx) = socket.split();

    let mut ok = tx.send(Message::Text(shared.hello.as_ref().into())).await.is_ok()
        && tx.send(Message::Text(snapshot.as_ref().into())).await.is_ok();
    let mut ended = snapshot_tick == u64::MAX;
    while ok && !ended {
        tokio::select! {
            published = frames.recv() => match published {
                Ok((tick, text)) => {
                    if tick > snapshot_tick {
                        ended = tick == u64::MAX;
                        ok = tx.send(Message::Text(text.as_ref().into())).await.is_ok();
                    }
                }
                Err(broadcast::error::RecvError::Lagged(skipped)) => {
                    log::debug!("client {client} lagged by {skipped} frames");
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = rx.next() => match incoming {
                Some(Ok(Message::Text(text))) => match ClientMessage::parse(text.as_str()) {
                    Ok(ClientMessage::Input(input)) => {
                        let v = clamp_speed(Point2::new(input.vx, input.vy), shared.max_speed);
                        if let Ok(mut mailbox) = shared.mailbox.lock() {
                            mailbox.submit(client, input.seq, v);
                        }
                    }
                    Err(message) => {
                        let msg = ServerMessage::Error(ErrorMessage { message }).to_text();
                        let _ = tx.send(Message::Text(msg.into())).await;
                        break;
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    let message = "binary frames are not supported".to_string();
                    let msg = ServerMessage::Error(ErrorMessage { message }).to_text();
                    let _ = tx.send(Message::Text(msg.into())).await;
                    break;
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            _ = closing.changed() => break,
        }
    }
    let _ = tx.send(Message::Close(None)).await;
    if let Ok(mut mailbox) = shared.mailbox.lock() {
        mailbox.disconnect(client);
    }
}
