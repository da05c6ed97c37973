//! HTTP and socket client for a running studio service.

use futures::stream::{SplitSink, SplitStream};
use futures::{SinkExt, StreamExt};
use relight_core::io::LightsPreset;
use relight_core::protocol::{Ack, ClientMessage, ErrorReply, ServerMessage, Snapshot};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("socket failed: {0}")]
    Socket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("service rejected request: {}", .0.message)]
    Rejected(ErrorReply),
    #[error("unexpected reply: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct StudioClient {
    base: String,
    http: reqwest::Client,
}

impl StudioClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn snapshot(&self) -> Result<Snapshot> {
        let resp = self.http.get(self.url("/api/snapshot")).send().await?;
        Ok(resp.error_for_status()?.json().await?)
    }

    pub async fn set_params(&self, params: &LightsPreset) -> Result<Ack> {
        let resp = self.http.post(self.url("/api/params")).json(params).send().await?;
        ack_or_rejection(resp).await
    }

    /// Uploads an encoded target image and returns the applied fit.
    pub async fn fit(&self, target_png: Vec<u8>) -> Result<Ack> {
        let resp = self
            .http
            .post(self.url("/api/fit"))
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(target_png)
            .send()
            .await?;
        ack_or_rejection(resp).await
    }

    /// Full-resolution PNG of the current lighting.
    pub async fn export(&self) -> Result<Vec<u8>> {
        let resp = self.http.get(self.url("/api/export")).send().await?;
        if !resp.status().is_success() {
            return Err(rejection(resp).await);
        }
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn connect(&self) -> Result<LiveSocket> {
        let ws_url = format!("{}/ws", self.base.replacen("http", "ws", 1));
        let (stream, _) = tokio_tungstenite::connect_async(ws_url).await?;
        let (sink, stream) = stream.split();
        Ok(LiveSocket { sink, stream })
    }
}

async fn rejection(resp: reqwest::Response) -> ClientError {
    let status = resp.status();
    match resp.json::<ServerMessage>().await {
        Ok(ServerMessage::Error(e)) => ClientError::Rejected(e),
        _ => ClientError::Protocol(format!("status {status}")),
    }
}

async fn ack_or_rejection(resp: reqwest::Response) -> Result<Ack> {
    if resp.status().is_success() {
        Ok(resp.json().await?)
    } else {
        Err(rejection(resp).await)
    }
}

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Ack(Ack),
    Error(ErrorReply),
    Frame {
        seq: u64,
        width: usize,
        height: usize,
        png: Vec<u8>,
    },
}

/// Open `/ws` connection.
pub struct LiveSocket {
    sink: SplitSink<Ws, Message>,
    stream: SplitStream<Ws>,
}

impl LiveSocket {
    pub async fn send_params(&mut self, params: LightsPreset) -> Result<()> {
        self.send_raw(serde_json::to_string(&ClientMessage::SetParams { params }).expect("serializable"))
            .await
    }

    /// Sends an arbitrary text message, for protocol testing.
    pub async fn send_raw(&mut self, text: String) -> Result<()> {
        Ok(self.sink.send(Message::Text(text.into())).await?)
    }

    /// Next ack, error or frame; a frame header is joined with its PNG.
    /// `None` once the service closes the socket.
    pub async fn next_event(&mut self) -> Result<Option<Event>> {
        let Some(text) = self.next_text().await? else {
            return Ok(None);
        };
        let msg: ServerMessage =
            serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("{e}: {text}")))?;
        Ok(Some(match msg {
            ServerMessage::Ack(a) => Event::Ack(a),
            ServerMessage::Error(e) => Event::Error(e),
            ServerMessage::Frame { seq, width, height } => {
                let png = self.next_binary().await?;
                Event::Frame {
                    seq,
                    width,
                    height,
                    png,
                }
            }
        }))
    }

    async fn next_text(&mut self) -> Result<Option<String>> {
        while let Some(msg) = self.stream.next().await {
            match msg? {
                Message::Text(t) => return Ok(Some(t.to_string())),
                Message::Close(_) => return Ok(None),
                Message::Binary(_) => return Err(ClientError::Protocol("binary message without header".into())),
                _ => {}
            }
        }
        Ok(None)
    }

    async fn next_binary(&mut self) -> Result<Vec<u8>> {
        while let Some(msg) = self.stream.next().await {
            match msg? {
                Message::Binary(b) => return Ok(b.to_vec()),
                Message::Ping(_) | Message::Pong(_) => {}
                other => return Err(ClientError::Protocol(format!("expected frame data, got {other:?}"))),
            }
        }
        Err(ClientError::Protocol("socket closed inside a frame".into()))
    }

    pub async fn close(mut self) -> Result<()> {
        Ok(self.sink.close().await?)
    }
}
