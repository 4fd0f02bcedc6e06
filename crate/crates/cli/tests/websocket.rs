use std::sync::Arc;

use d2m_cli::server;
use dance2music::net::{online_generate, ModelConfig, ModelParams, Sampling};
use dance2music::pose::{synth_dance, SynthConfig};
use dance2music::stream::{ClientMessage, ServedModel, ServerMessage};
use dance2music::DanceSequence;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn model() -> ServedModel {
    ServedModel {
        params: Arc::new(ModelParams::init(&ModelConfig::desk(), 5).unwrap()),
        sampling: Sampling::Argmax,
        tag: "test".into(),
    }
}

async fn start(model: ServedModel) -> (String, tokio::sync::oneshot::Sender<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(server::serve(listener, model, async {
        let _ = rx.await;
    }));
    (format!("127.0.0.1:{}", addr.port()), tx)
}

async fn connect(addr: &str) -> Socket {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/v1/session")).await.unwrap();
    ws
}

async fn send(ws: &mut Socket, msg: &ClientMessage) {
    ws.send(Message::Text(serde_json::to_string(msg).unwrap().into())).await.unwrap();
}

async fn recv(ws: &mut Socket) -> Option<ServerMessage> {
    loop {
        match ws.next().await? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

fn hello() -> ClientMessage {
    ClientMessage::Hello { fps: 30, k: 6, generator: None }
}

fn pose(seq: u64, d: &DanceSequence, i: usize) -> ClientMessage {
    ClientMessage::Pose { seq, pose: d.frames[i].coords().to_vec() }
}

/// Streams `d` and returns the notes in arrival order plus the summary.
async fn stream_dance(addr: &str, d: &DanceSequence) -> (Vec<u8>, ServerMessage) {
    let mut ws = connect(addr).await;
    send(&mut ws, &hello()).await;
    assert!(matches!(recv(&mut ws).await, Some(ServerMessage::Ready { .. })));
    let mut notes = Vec::new();
    for i in 0..d.len() {
        send(&mut ws, &pose(i as u64, d, i)).await;
        if (i + 1) % 6 == 0 {
            match recv(&mut ws).await.unwrap() {
                ServerMessage::Note { index, ordinal, midi, at_frame } => {
                    assert_eq!(index, notes.len());
                    assert_eq!(at_frame, i);
                    assert_eq!(midi, dance2music::music::PITCH_TABLE[ordinal as usize]);
                    notes.push(ordinal);
                }
                other => panic!("expected a note, got {other:?}"),
            }
        }
    }
    send(&mut ws, &ClientMessage::End).await;
    let summary = recv(&mut ws).await.unwrap();
    (notes, summary)
}

#[tokio::test]
async fn healthz_answers_ok() {
    let (addr, _stop) = start(model()).await;
    let mut stream = tokio::net::TcpStream::connect(&addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.ends_with("ok"));
}

#[tokio::test]
async fn streamed_notes_match_batch_inference() {
    let m = model();
    let (addr, _stop) = start(m.clone()).await;
    let d = synth_dance(&SynthConfig { seed: 4, duration_s: 4.0, ..Default::default() }).unwrap();
    let (notes, summary) = stream_dance(&addr, &d).await;
    assert_eq!(notes.len(), 20);
    assert_eq!(notes[0], 2);
    assert_eq!(notes, online_generate(&m.params, &d, Sampling::Argmax).unwrap());
    match summary {
        ServerMessage::Summary { notes: s, correlation } => {
            assert_eq!(s, notes);
            assert!(correlation.is_finite());
        }
        other => panic!("expected summary, got {other:?}"),
    }
}

#[tokio::test]
async fn concurrent_sessions_are_isolated() {
    let m = model();
    let (addr, _stop) = start(m.clone()).await;
    let a = synth_dance(&SynthConfig { seed: 1, duration_s: 3.0, ..Default::default() }).unwrap();
    let b = synth_dance(&SynthConfig { seed: 2, duration_s: 3.0, ..Default::default() }).unwrap();
    let (ra, rb) = tokio::join!(stream_dance(&addr, &a), stream_dance(&addr, &b));
    assert_eq!(ra.0, online_generate(&m.params, &a, Sampling::Argmax).unwrap());
    assert_eq!(rb.0, online_generate(&m.params, &b, Sampling::Argmax).unwrap());
}

#[tokio::test]
async fn end_before_first_note_gives_empty_summary() {
    let (addr, _stop) = start(model()).await;
    let d = synth_dance(&SynthConfig { seed: 4, duration_s: 1.0, ..Default::default() }).unwrap();
    let mut ws = connect(&addr).await;
    send(&mut ws, &hello()).await;
    recv(&mut ws).await.unwrap();
    for i in 0..5 {
        send(&mut ws, &pose(i as u64, &d, i)).await;
    }
    send(&mut ws, &ClientMessage::End).await;
    assert_eq!(
        recv(&mut ws).await,
        Some(ServerMessage::Summary { notes: vec![], correlation: 0.0 })
    );
    assert_eq!(recv(&mut ws).await, None);
}

async fn expect_error_then_close(ws: &mut Socket) {
    match recv(ws).await {
        Some(ServerMessage::Error { .. }) => {}
        other => panic!("expected an error, got {other:?}"),
    }
    assert_eq!(recv(ws).await, None);
}

#[tokio::test]
async fn protocol_errors_close_the_session() {
    let (addr, _stop) = start(model()).await;
    let d = synth_dance(&SynthConfig { seed: 4, duration_s: 1.0, ..Default::default() }).unwrap();

    let mut ws = connect(&addr).await;
    send(&mut ws, &ClientMessage::Hello { fps: 30, k: 0, generator: None }).await;
    expect_error_then_close(&mut ws).await;

    let mut ws = connect(&addr).await;
    send(&mut ws, &hello()).await;
    recv(&mut ws).await.unwrap();
    send(&mut ws, &hello()).await;
    expect_error_then_close(&mut ws).await;

    let mut ws = connect(&addr).await;
    send(&mut ws, &hello()).await;
    recv(&mut ws).await.unwrap();
    send(&mut ws, &pose(3, &d, 0)).await;
    send(&mut ws, &pose(2, &d, 1)).await;
    expect_error_then_close(&mut ws).await;

    let mut ws = connect(&addr).await;
    send(&mut ws, &hello()).await;
    recv(&mut ws).await.unwrap();
    send(&mut ws, &ClientMessage::Pose { seq: 0, pose: vec![0.0; 35] }).await;
    expect_error_then_close(&mut ws).await;

    let mut ws = connect(&addr).await;
    ws.send(Message::Text("{\"type\":\"dance\"}".into())).await.unwrap();
    expect_error_then_close(&mut ws).await;

    let mut ws = connect(&addr).await;
    send(&mut ws, &ClientMessage::Hello { fps: 30, k: 6, generator: Some("offline".into()) }).await;
    expect_error_then_close(&mut ws).await;
}
