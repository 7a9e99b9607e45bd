use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::sync::{oneshot, watch};
use tokio::time::{interval_at, Instant, MissedTickBehavior};

use super::wire::{EndOfStream, ScenarioInfo, ServerMessage, StateFrame};
use super::ServiceError;
use crate::scenario_io::{Scenario, TrajectoryRecord};

struct ReplayShared {
    hello: Arc<str>,
    frames: Vec<Arc<str>>,
    end: Arc<str>,
    period: Duration,
    closing: watch::Receiver<bool>,
}

pub struct ReplayHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    closing: watch::Sender<bool>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ReplayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn stop(mut self) {
        let _ = self.closing.send(true);
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.server).await;
    }
}

/// Serves `record` on `/session`: every client that connects gets the
/// scenario header, then all frames at the recorded rate, then `end`.
/// Client messages are read and ignored.
pub async fn serve_replay(
    record: &TrajectoryRecord,
    scenario: Option<&Scenario>,
    addr: SocketAddr,
) -> Result<ReplayHandle, ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    let local = listener
        .local_addr()
        .map_err(|source| ServiceError::Bind { addr, source })?;
    let frames = record
        .frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            ServerMessage::State(StateFrame::from_frame(k as u64, f, None, None))
                .to_text()
                .into()
        })
        .collect();
    let end = ServerMessage::End(EndOfStream {
        frames: record.frames.len() as u64,
        reason: "end of recording".into(),
    })
    .to_text()
    .into();
    let (closing_tx, closing_rx) = watch::channel(false);
    let shared = Arc::new(ReplayShared {
        hello: ServerMessage::Scenario(ScenarioInfo::replay(record, scenario))
            .to_text()
            .into(),
        frames,
        end,
        period: Duration::from_secs_f64(1.0 / record.header.rate_hz),
        closing: closing_rx,
    });
    let app = Router::new().route("/session", get(upgrade)).with_state(shared);
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await
    });
    Ok(ReplayHandle {
        addr: local,
        shutdown: Some(shutdown_tx),
        closing: closing_tx,
        server,
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<ReplayShared>>) -> Response {
    ws.on_upgrade(move |socket| play(socket, shared))
}

async fn play(socket: WebSocket, shared: Arc<ReplayShared>) {
    let (mut tx, mut rx) = socket.split();
    let mut closing = shared.closing.clone();
    // Drain and ignore whatever the client sends.
    let reader = tokio::spawn(async move { while let Some(Ok(_)) = rx.next().await {} });
    if tx.send(Message::Text(shared.hello.as_ref().into())).await.is_err() {
        reader.abort();
        return;
    }
    // A fixed schedule keeps the long-run rate exact; late ticks are
    // delayed rather than bunched.
    let mut ticker = interval_at(Instant::now(), shared.period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    for text in &shared.frames {
        tokio::select! {
            _ = ticker.tick() => {}
            _ = closing.changed() => {
                reader.abort();
                return;
            }
        }
        if tx.send(Message::Text(text.as_ref().into())).await.is_err() {
            reader.abort();
            return;
        }
    }
    let _ = tx.send(Message::Text(shared.end.as_ref().into())).await;
    let _ = tx.send(Message::Close(None)).await;
    reader.abort();
}
