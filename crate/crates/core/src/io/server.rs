//! The stream server.
//!
//! Two listeners: a plain TCP socket that accepts one feeder at a time and
//! reads frame lines, and an HTTP listener that upgrades `/feed` to a
//! WebSocket carrying [`FeedMessage`](super::feed::FeedMessage) JSON,
//! serves the console under `/console` and counters under `/stats`.
//!
//! The pipeline is a single ordered consumer. Each feeder connection starts
//! from a reset pipeline so a restarted feeder may reuse timestamps. Slow
//! subscribers are dropped instead of holding back the pipeline.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use log::{debug, info, warn};
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::pipeline::Pipeline;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// Where feeders connect and send frame lines.
    pub feeder_addr: SocketAddr,
    /// HTTP: `/feed` WebSocket, `/console`, `/stats`.
    pub feed_addr: SocketAddr,
    /// Static console assets. Without one a bare message log is served.
    pub console_dir: Option<PathBuf>,
    /// Messages a subscriber may fall behind before it is dropped.
    pub subscriber_buffer: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            feeder_addr: SocketAddr::from(([127, 0, 0, 1], 7870)),
            feed_addr: SocketAddr::from(([127, 0, 0, 1], 7871)),
            console_dir: None,
            subscriber_buffer: 1024,
        }
    }
}

#[derive(Debug, Default)]
pub struct ServerStats {
    pub frames: AtomicU64,
    pub errors: AtomicU64,
    pub messages: AtomicU64,
    pub subscribers: AtomicU64,
    pub feeder_sessions: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub frames: u64,
    pub errors: u64,
    pub messages: u64,
    pub subscribers: u64,
    pub feeder_sessions: u64,
}

impl ServerStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            frames: self.frames.load(Ordering::Relaxed),
            errors: self.errors.load(Ordering::Relaxed),
            messages: self.messages.load(Ordering::Relaxed),
            subscribers: self.subscribers.load(Ordering::Relaxed),
            feeder_sessions: self.feeder_sessions.load(Ordering::Relaxed),
        }
    }
}

pub struct ServerHandle {
    pub feeder_addr: SocketAddr,
    pub feed_addr: SocketAddr,
    pub stats: Arc<ServerStats>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Stops both listeners and waits for them to finish.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }

    /// Serves until `signal` resolves or a listener stops, then shuts down.
    pub async fn run_until(mut self, signal: impl Future<Output = ()>) {
        let mut feeder = self.tasks.pop().expect("feeder task");
        tokio::select! {
            _ = signal => self.tasks.push(feeder),
            _ = &mut feeder => {}
        }
        self.shutdown().await;
    }
}

#[derive(Clone)]
struct AppState {
    tx: broadcast::Sender<Arc<str>>,
    stats: Arc<ServerStats>,
    shutdown: watch::Receiver<bool>,
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailure { addr, source })
}

/// Binds both listeners and starts serving. Returns once both are bound.
pub async fn serve(cfg: ServeConfig, pipeline: Pipeline) -> Result<ServerHandle, ServeError> {
    let feeder = bind(cfg.feeder_addr).await?;
    let http = bind(cfg.feed_addr).await?;
    let feeder_addr = feeder.local_addr().expect("bound socket has an address");
    let feed_addr = http.local_addr().expect("bound socket has an address");

    let (shutdown, shutdown_rx) = watch::channel(false);
    let (tx, _) = broadcast::channel(cfg.subscriber_buffer.max(1));
    let stats = Arc::new(ServerStats::default());
    let state = AppState {
        tx: tx.clone(),
        stats: stats.clone(),
        shutdown: shutdown_rx.clone(),
    };

    let console = match &cfg.console_dir {
        Some(dir) => Router::new().fallback_service(ServeDir::new(dir)),
        None => Router::new().fallback(get(|| async { Html(FALLBACK_CONSOLE) })),
    };
    let app = Router::new()
        .route("/feed", get(feed_socket))
        .route("/stats", get(stats_json))
        .nest_service("/console", console)
        .with_state(state);

    let mut http_shutdown = shutdown_rx.clone();
    let http_task = tokio::spawn(async move {
        let graceful = async move { stopped(&mut http_shutdown).await };
        if let Err(e) = axum::serve(http, app).with_graceful_shutdown(graceful).await {
            warn!("feed listener stopped: {e}");
        }
    });
    let feeder_task = tokio::spawn(feeder_loop(feeder, pipeline, tx, stats.clone(), shutdown_rx));

    info!("accepting feeders on {feeder_addr}, feed on ws://{feed_addr}/feed");
    Ok(ServerHandle {
        feeder_addr,
        feed_addr,
        stats,
        shutdown,
        tasks: vec![http_task, feeder_task],
    })
}

async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|stop| *stop).await;
}

async fn feeder_loop(
    listener: TcpListener,
    mut pipeline: Pipeline,
    tx: broadcast::Sender<Arc<str>>,
    stats: Arc<ServerStats>,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        let accepted = tokio::select! {
            r = listener.accept() => r,
            _ = stopped(&mut shutdown) => return,
        };
        let (sock, peer) = match accepted {
            Ok(a) => a,
            Err(e) => {
                warn!("feeder accept failed: {e}");
                continue;
            }
        };
        info!("feeder connected from {peer}");
        stats.feeder_sessions.fetch_add(1, Ordering::Relaxed);
        pipeline.reset();
        let before = pipeline.stats();
        let mut reader = BufReader::new(sock);
        let mut buf = Vec::new();
        loop {
            tokio::select! {
                // a partial line stays in `buf` if another branch wins
                r = reader.read_until(b'\n', &mut buf) => match r {
                    Ok(0) => break,
                    Ok(_) => {
                        let line = String::from_utf8_lossy(&buf).into_owned();
                        buf.clear();
                        if line.trim().is_empty() {
                            continue;
                        }
                        for msg in pipeline.process_line(&line) {
                            stats.messages.fetch_add(1, Ordering::Relaxed);
                            // no subscribers is fine
                            let _ = tx.send(Arc::from(msg.to_json()));
                        }
                        let s = pipeline.stats();
                        stats.frames.store(s.frames, Ordering::Relaxed);
                        stats.errors.store(s.errors, Ordering::Relaxed);
                    }
                    Err(e) => {
                        warn!("feeder {peer} read error: {e}");
                        break;
                    }
                },
                extra = listener.accept() => {
                    if let Ok((_, other)) = extra {
                        warn!("rejecting feeder {other}: {peer} is already connected");
                    }
                }
                _ = stopped(&mut shutdown) => return,
            }
        }
        let after = pipeline.stats();
        info!(
            "feeder {peer} disconnected: {} frames, {} errors, {} actions, {} commands",
            after.frames - before.frames,
            after.errors - before.errors,
            after.actions - before.actions,
            after.commands - before.commands,
        );
    }
}

async fn feed_socket(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| subscriber(socket, app))
}

async fn subscriber(mut socket: WebSocket, app: AppState) {
    let mut rx = app.tx.subscribe();
    let mut shutdown = app.shutdown.clone();
    app.stats.subscribers.fetch_add(1, Ordering::Relaxed);
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if socket.send(Message::Text((&*text).into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    warn!("dropping slow subscriber, {n} messages behind");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                // the feed is read-only; anything but a close is ignored
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(other)) => debug!("ignoring subscriber message {other:?}"),
            },
            _ = stopped(&mut shutdown) => break,
        }
    }
    let _ = socket.send(Message::Close(None)).await;
    app.stats.subscribers.fetch_sub(1, Ordering::Relaxed);
}

async fn stats_json(State(app): State<AppState>) -> impl IntoResponse {
    Json(app.stats.snapshot())
}

const FALLBACK_CONSOLE: &str = r#"<!doctype html>
<meta charset="utf-8">
<title>lipsignal feed</title>
<pre id="log"></pre>
<script>
const log = document.getElementById("log");
const ws = new WebSocket(`ws://${location.host}/feed`);
ws.onmessage = (e) => { log.textContent = e.data + "\n" + log.textContent.slice(0, 20000); };
ws.onclose = () => { log.textContent = "disconnected\n" + log.textContent; };
</script>
"#;
