#![allow(dead_code)]

use std::time::Duration;

use futures_util::StreamExt;
use lipsignal::classifier::{ModelParams, SvmParams, TrainedModel};
use lipsignal::engine::EngineConfig;
use lipsignal::features::{CoeffSet, NormMode};
use lipsignal::io::{serve, ServeConfig, ServerHandle};
use lipsignal::landmarks::SchemeRegistry;
use lipsignal::pipeline::Pipeline;
use lipsignal::slots::{Codebook, SlotConfig, SlotMode, SlotTracker};
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

pub const OPEN_CLOSE: &str = include_str!("../fixtures/open_close.ndjson");

/// Open when the middle gap exceeds 23.5 px.
pub fn gap_model() -> TrainedModel {
    TrainedModel::new(
        ModelParams::Svm(SvmParams {
            w: [0.0, 1.0, 0.0, 0.0, 0.0],
            b: -23.5,
        }),
        CoeffSet::default(),
        NormMode::None,
        0.5,
    )
}

/// Two 500 ms intervals per slot; `11` means HELP.
pub fn fixture_pipeline() -> Pipeline {
    let cfg = SlotConfig::new(500, 2, SlotMode::Bits).unwrap();
    let book = Codebook::new(SlotMode::Bits, 2, [(3, "HELP".to_string())].into()).unwrap();
    Pipeline::new(
        gap_model(),
        SchemeRegistry::default(),
        EngineConfig::default(),
        SlotTracker::new(cfg, book).unwrap(),
    )
    .unwrap()
}

pub fn offline(text: &str) -> Vec<String> {
    fixture_pipeline()
        .process_lines(text.lines())
        .iter()
        .map(|m| m.to_json())
        .collect()
}

pub async fn start() -> ServerHandle {
    let cfg = ServeConfig {
        feeder_addr: "127.0.0.1:0".parse().unwrap(),
        feed_addr: "127.0.0.1:0".parse().unwrap(),
        ..ServeConfig::default()
    };
    serve(cfg, fixture_pipeline()).await.unwrap()
}

pub async fn wait_until(mut cond: impl FnMut() -> bool) {
    tokio::time::timeout(Duration::from_secs(5), async {
        while !cond() {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    })
    .await
    .expect("condition not reached within 5 s");
}

pub type Subscriber =
    tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

pub async fn subscribe(server: &ServerHandle) -> Subscriber {
    let before = server.stats.snapshot().subscribers;
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/feed", server.feed_addr))
        .await
        .unwrap();
    let stats = server.stats.clone();
    wait_until(|| stats.snapshot().subscribers > before).await;
    ws
}

/// Sends `text` as one feeder session and waits until the server has read it.
pub async fn feed(server: &ServerHandle, text: &str) {
    let lines = text.lines().filter(|l| !l.trim().is_empty()).count() as u64;
    let s = server.stats.snapshot();
    let target = s.frames + s.errors + lines;
    let mut sock = TcpStream::connect(server.feeder_addr).await.unwrap();
    sock.write_all(text.as_bytes()).await.unwrap();
    sock.shutdown().await.unwrap();
    let stats = server.stats.clone();
    wait_until(|| {
        let s = stats.snapshot();
        s.frames + s.errors >= target
    })
    .await;
}

/// Collects text messages until `n` have arrived, then keeps listening
/// briefly so extras would show up.
pub async fn collect(ws: &mut Subscriber, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    loop {
        let wait = if out.len() >= n {
            Duration::from_millis(200)
        } else {
            deadline.saturating_duration_since(tokio::time::Instant::now())
        };
        match tokio::time::timeout(wait, ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => out.push(t.to_string()),
            Ok(Some(Ok(_))) => {}
            _ => break,
        }
    }
    out
}
