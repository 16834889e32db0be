//! HTTP and websocket front of a live waymark session.
//!
//! REST endpoints (JSON bodies):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/health` | status, revision, active strategies |
//! | GET | `/api/state` | revision and values |
//! | POST | `/api/state/properties` | assign properties in one commit |
//! | POST | `/api/state/callbacks/{name}` | run an update callback; body holds its args |
//! | GET | `/api/suggestions` | pending suggestions |
//! | POST | `/api/suggestions/{accept,reject,preview-start,preview-end}` | `{"suggestion_id": ..}` |
//!
//! `/ws` sends a `hello` with the pending set on connect, then every
//! `suggestion` and `retraction` in engine order.

mod http;
pub mod runtime;

pub use http::router;
pub use runtime::{push_message, spawn_engine, EngineGone, EngineHandle, Health, Subscription};

use std::net::SocketAddr;

/// Serves the router until the listener fails or the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, handle: EngineHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}
