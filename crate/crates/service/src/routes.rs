use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use relight_core::io::{decode_image, parse_preset};
use relight_core::protocol::{Ack, ClientMessage, ErrorReply, ServerMessage};
use relight_core::Error;
use tokio::sync::{broadcast, mpsc};

use crate::session::Session;

/// Uploaded targets can be full-size frames.
const MAX_UPLOAD: usize = 256 * 1024 * 1024;

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/api/snapshot", get(snapshot))
        .route("/api/params", post(set_params))
        .route("/api/fit", post(fit))
        .route("/api/export", get(export))
        .route("/ws", get(socket))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(session)
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(ServerMessage::Error(ErrorReply::from_error(&self.0)))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> relight_core::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::invalid(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn snapshot(State(s): State<Arc<Session>>) -> Json<relight_core::protocol::Snapshot> {
    Json(s.snapshot())
}

async fn set_params(State(s): State<Arc<Session>>, body: String) -> ApiResult<Json<Ack>> {
    let preset = parse_preset(&body).map_err(ApiError)?;
    s.set_params(preset).map(Json).map_err(ApiError)
}

async fn fit(State(s): State<Arc<Session>>, body: Bytes) -> ApiResult<Json<Ack>> {
    let ack = blocking(move || {
        let target = decode_image(&body)?;
        s.fit(&target)
    })
    .await?;
    Ok(Json(ack))
}

async fn export(State(s): State<Arc<Session>>) -> ApiResult<impl IntoResponse> {
    let png = blocking(move || s.export()).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn socket(State(s): State<Arc<Session>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| client_session(s, socket))
}

fn parse_client(text: &str) -> relight_core::Result<ClientMessage> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn reply_for(session: &Session, text: &str) -> ServerMessage {
    match parse_client(text).and_then(|ClientMessage::SetParams { params }| session.set_params(params)) {
        Ok(ack) => ServerMessage::Ack(ack),
        Err(e) => ServerMessage::Error(ErrorReply::from_error(&e)),
    }
}

fn text(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("message serializes").into())
}

async fn client_session(session: Arc<Session>, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let mut frames = session.subscribe();
    let (replies, mut outbox) = mpsc::channel::<Message>(64);

    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                reply = outbox.recv() => match reply {
                    Some(m) => if sink.send(m).await.is_err() { break },
                    None => break,
                },
                frame = frames.recv() => match frame {
                    Ok(f) => {
                        let header = text(&ServerMessage::Frame { seq: f.seq, width: f.width, height: f.height });
                        if sink.send(header).await.is_err() || sink.send(Message::Binary(f.png)).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("subscriber skipped {n} frames"),
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => {
                if replies.send(text(&reply_for(&session, t.as_str()))).await.is_err() {
                    break;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(replies);
    writer.abort();
}
