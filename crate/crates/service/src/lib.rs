//! HTTP and WebSocket studio around a single relighting session.
//!
//! `GET /api/snapshot`, `POST /api/params`, `POST /api/fit`, `GET /api/export`
//! and `/ws`. Parameter updates are acknowledged immediately and rendered by
//! one worker; a burst of updates renders only the newest pending one.

mod routes;
mod session;

use std::net::SocketAddr;
use std::sync::Arc;

pub use routes::router;
pub use session::{Frame, Session, StudioConfig, DEFAULT_PREVIEW_SHORT_SIDE};

/// Serves `session` on `listener` until the server stops.
pub async fn serve(session: Arc<Session>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let worker = session.spawn_renderer();
    let result = axum::serve(listener, router(session)).await;
    worker.abort();
    result
}

/// Binds `addr` and serves in the background; returns the bound address.
pub async fn spawn(
    session: Arc<Session>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    Ok((bound, tokio::spawn(serve(session, listener))))
}
