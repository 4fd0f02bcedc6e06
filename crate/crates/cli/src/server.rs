//! WebSocket transport for [`dance2music::stream::Session`].

use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use dance2music::stream::{ServedModel, ServerMessage, Session};
use tokio::net::TcpListener;

#[derive(Clone)]
struct AppState {
    model: ServedModel,
    next_id: Arc<AtomicU64>,
}

/// `GET /healthz` and the `/v1/session` WebSocket endpoint.
pub fn router(model: ServedModel) -> Router {
    let state = AppState {
        model,
        next_id: Arc::new(AtomicU64::new(1)),
    };
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/session", get(upgrade))
        .with_state(state)
}

pub async fn serve(
    listener: TcpListener,
    model: ServedModel,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(model))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| run_session(socket, Session::new(id, state.model)))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    match serde_json::to_string(msg) {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

async fn run_session(mut socket: WebSocket, mut session: Session) {
    while let Some(Ok(msg)) = socket.recv().await {
        let outcome = match msg {
            Message::Text(text) => session.handle_text(text.as_str()),
            Message::Binary(_) => {
                let error = ServerMessage::Error {
                    message: "binary frames are not supported".into(),
                };
                send(&mut socket, &error).await;
                break;
            }
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        for reply in &outcome.replies {
            if !send(&mut socket, reply).await {
                return;
            }
        }
        if outcome.close {
            break;
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
