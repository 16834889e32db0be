use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use waymark_core::engine::{InteractionError, InteractionKind};
use waymark_core::state::{ChangeEvent, StateError};
use waymark_core::value::Map;
use waymark_core::Value;

use crate::runtime::{EngineGone, EngineHandle};

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({"error": message.to_string()}))).into_response()
}

fn gone(_: EngineGone) -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, EngineGone)
}

/// Parses a JSON body; an empty body counts as `{}` when `allow_empty`.
/// Failures are 400 responses.
fn object_body(body: &Bytes, allow_empty: bool) -> Result<Map, Box<Response>> {
    if body.iter().all(u8::is_ascii_whitespace) && allow_empty {
        return Ok(Map::new());
    }
    let message = match serde_json::from_slice::<Value>(body) {
        Ok(Value::Map(m)) => return Ok(m),
        Ok(other) => format!("body must be a JSON object, got {}", other.type_name()),
        Err(e) => format!("invalid JSON body: {e}"),
    };
    Err(Box::new(error(StatusCode::BAD_REQUEST, message)))
}

fn committed(change: ChangeEvent) -> Response {
    Json(json!({"revision": change.revision, "changed_keys": change.changed_keys})).into_response()
}

fn state_error(e: StateError) -> Response {
    let status = match e {
        StateError::UnknownCallback(_) => StatusCode::NOT_FOUND,
        StateError::EmptyPatch | StateError::ArgumentMismatch { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    error(status, e)
}

async fn health(State(h): State<EngineHandle>) -> Response {
    match h.health().await {
        Ok(health) => Json(json!({
            "status": "ok",
            "revision": health.revision,
            "active_strategies": health.active_strategies,
            "pending": health.pending,
        }))
        .into_response(),
        Err(e) => gone(e),
    }
}

async fn get_state(State(h): State<EngineHandle>) -> Response {
    match h.state().await {
        Ok(v) => Json(v).into_response(),
        Err(e) => gone(e),
    }
}

async fn set_properties(State(h): State<EngineHandle>, body: Bytes) -> Response {
    let patch = match object_body(&body, false) {
        Ok(p) => p,
        Err(r) => return *r,
    };
    match h.set_properties(patch).await {
        Ok(Ok(change)) => committed(change),
        Ok(Err(e)) => state_error(e),
        Err(e) => gone(e),
    }
}

async fn invoke_callback(
    State(h): State<EngineHandle>,
    Path(name): Path<String>,
    body: Bytes,
) -> Response {
    let args = match object_body(&body, true) {
        Ok(a) => a,
        Err(r) => return *r,
    };
    match h.invoke_callback(name, args).await {
        Ok(Ok(change)) => committed(change),
        Ok(Err(e)) => state_error(e),
        Err(e) => gone(e),
    }
}

async fn pending(State(h): State<EngineHandle>) -> Response {
    match h.pending().await {
        Ok(list) => Json(list).into_response(),
        Err(e) => gone(e),
    }
}

async fn interact(
    State(h): State<EngineHandle>,
    Path(kind): Path<String>,
    body: Bytes,
) -> Response {
    let Some(kind) = InteractionKind::parse(&kind) else {
        return error(StatusCode::NOT_FOUND, format!("unknown interaction '{kind}'"));
    };
    let body = match object_body(&body, false) {
        Ok(b) => b,
        Err(r) => return *r,
    };
    let id = match body.get("suggestion_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(_)) => body["suggestion_id"].to_string(),
        _ => return error(StatusCode::BAD_REQUEST, "missing 'suggestion_id'"),
    };
    match h.interact(id, kind).await {
        Ok(Ok(s)) => Json(json!({"status": s.status, "suggestion": s})).into_response(),
        Ok(Err(e @ InteractionError::UnknownSuggestion(_))) => error(StatusCode::NOT_FOUND, e),
        Ok(Err(e @ InteractionError::InvalidTransition { .. })) => error(StatusCode::CONFLICT, e),
        Err(e) => gone(e),
    }
}

async fn ws(State(h): State<EngineHandle>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| serve_socket(h, socket))
}

async fn serve_socket(h: EngineHandle, socket: WebSocket) {
    let Ok(mut sub) = h.subscribe().await else {
        return;
    };
    let (mut sink, mut stream) = socket.split();
    if sink
        .send(Message::Text(sub.hello.to_string().into()))
        .await
        .is_err()
    {
        return;
    }
    loop {
        tokio::select! {
            push = sub.pushes.recv() => match push {
                Ok(msg) => {
                    if sink.send(Message::Text(msg.to_string().into())).await.is_err() {
                        return;
                    }
                }
                // a client that fell behind reconnects and resyncs from hello
                Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => {
                    let _ = sink.send(Message::Close(None)).await;
                    return;
                }
            },
            incoming = stream.next() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub fn router(handle: EngineHandle) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/state", get(get_state))
        .route("/api/state/properties", post(set_properties))
        .route("/api/state/callbacks/{name}", post(invoke_callback))
        .route("/api/suggestions", get(pending))
        .route("/api/suggestions/{kind}", post(interact))
        .route("/ws", get(ws))
        .with_state(handle)
}

