mod common;

use std::time::Duration;

use common::*;
use lipsignal::io::FeedMessage;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

fn parse(msgs: &[String]) -> Vec<FeedMessage> {
    msgs.iter().map(|m| FeedMessage::from_json(m).unwrap()).collect()
}

#[test]
fn fixture_has_one_cycle_and_one_bad_line() {
    let mut p = fixture_pipeline();
    let msgs = p.process_lines(OPEN_CLOSE.lines());
    assert_eq!(p.stats().errors, 1);
    assert_eq!(p.stats().actions, 2);
    let commands: Vec<_> = msgs
        .iter()
        .filter_map(|m| match m {
            FeedMessage::Command { value, name, .. } => Some((*value, name.as_str())),
            _ => None,
        })
        .collect();
    assert_eq!(commands, [(3, "HELP")]);
}

#[tokio::test]
async fn subscriber_sees_alternating_states_then_a_command() {
    let server = start().await;
    let mut ws = subscribe(&server).await;
    feed(&server, OPEN_CLOSE).await;
    let msgs = parse(&collect(&mut ws, offline(OPEN_CLOSE).len()).await);

    let states: Vec<_> = msgs
        .iter()
        .filter_map(|m| match m {
            FeedMessage::State { state, .. } => Some(state.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(states, ["closed", "open", "closed"]);
    let commands: Vec<_> = msgs
        .iter()
        .filter(|m| matches!(m, FeedMessage::Command { .. }))
        .collect();
    assert_eq!(
        commands,
        [&FeedMessage::Command { slot_id: 0, value: 3, name: "HELP".into() }]
    );
    let s = server.stats.snapshot();
    assert_eq!(s.errors, 1);
    assert_eq!(s.frames, OPEN_CLOSE.lines().count() as u64 - 1);
    server.shutdown().await;
}

#[tokio::test]
async fn runs_without_subscribers() {
    let server = start().await;
    feed(&server, OPEN_CLOSE).await;
    let s = server.stats.snapshot();
    assert_eq!(s.subscribers, 0);
    assert_eq!(s.messages, offline(OPEN_CLOSE).len() as u64);
    server.shutdown().await;
}

#[tokio::test]
async fn reconnecting_feeder_starts_fresh() {
    let server = start().await;
    let mut ws = subscribe(&server).await;
    let expected = offline(OPEN_CLOSE);
    feed(&server, OPEN_CLOSE).await;
    let first = collect(&mut ws, expected.len()).await;
    // same timestamps again
    feed(&server, OPEN_CLOSE).await;
    let second = collect(&mut ws, expected.len()).await;
    assert_eq!(first, expected);
    assert_eq!(second, expected);
    assert_eq!(server.stats.snapshot().feeder_sessions, 2);
    server.shutdown().await;
}

#[tokio::test]
async fn second_feeder_is_refused() {
    let server = start().await;
    let mut first = TcpStream::connect(server.feeder_addr).await.unwrap();
    let stats = server.stats.clone();
    wait_until(|| stats.snapshot().feeder_sessions == 1).await;

    let mut second = TcpStream::connect(server.feeder_addr).await.unwrap();
    let mut buf = [0u8; 1];
    let read = tokio::time::timeout(Duration::from_secs(5), second.read(&mut buf)).await;
    assert!(matches!(read, Ok(Ok(0)) | Ok(Err(_))), "second feeder was kept open");

    first.write_all(OPEN_CLOSE.as_bytes()).await.unwrap();
    first.shutdown().await.unwrap();
    wait_until(|| stats.snapshot().frames > 0).await;
    server.shutdown().await;
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut sock = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    sock.write_all(req.as_bytes()).await.unwrap();
    let mut body = String::new();
    sock.read_to_string(&mut body).await.unwrap();
    body
}

#[tokio::test]
async fn serves_stats_and_console() {
    let server = start().await;
    feed(&server, OPEN_CLOSE).await;
    let stats = http_get(server.feed_addr, "/stats").await;
    assert!(stats.starts_with("HTTP/1.1 200"), "{stats}");
    assert!(stats.contains("\"errors\":1"), "{stats}");
    let console = http_get(server.feed_addr, "/console/").await;
    assert!(console.starts_with("HTTP/1.1 200"), "{console}");
    assert!(console.contains("/feed"));
    server.shutdown().await;
}

#[tokio::test]
async fn serves_console_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>console</h1>").unwrap();
    let cfg = lipsignal::io::ServeConfig {
        feeder_addr: "127.0.0.1:0".parse().unwrap(),
        feed_addr: "127.0.0.1:0".parse().unwrap(),
        console_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let server = lipsignal::io::serve(cfg, fixture_pipeline()).await.unwrap();
    let page = http_get(server.feed_addr, "/console/index.html").await;
    assert!(page.contains("<h1>console</h1>"), "{page}");
    server.shutdown().await;
}

#[tokio::test]
async fn occupied_port_is_a_bind_failure() {
    let server = start().await;
    let cfg = lipsignal::io::ServeConfig {
        feeder_addr: server.feeder_addr,
        feed_addr: "127.0.0.1:0".parse().unwrap(),
        ..Default::default()
    };
    let err = lipsignal::io::serve(cfg, fixture_pipeline()).await.err().unwrap();
    assert!(matches!(err, lipsignal::io::ServeError::BindFailure { .. }));
    server.shutdown().await;
}
