//! Messages exchanged with the studio service. Parameters always travel in
//! the lights-preset document form.

use serde::{Deserialize, Serialize};

use crate::io::LightsPreset;

/// Socket messages sent by a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SetParams { params: LightsPreset },
}

/// Socket messages sent by the service. A `Frame` header is always followed
/// by one binary message holding the PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack(Ack),
    Error(ErrorReply),
    Frame { seq: u64, width: usize, height: usize },
}

/// Applied (projected) parameters and the sequence number they render as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub params: LightsPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ErrorReply {
    pub fn from_error(err: &crate::Error) -> Self {
        let field = match err {
            crate::Error::Schema { field, .. } => Some(field.clone()),
            _ => None,
        };
        Self {
            message: err.to_string(),
            field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    pub k: usize,
    pub width: usize,
    pub height: usize,
    pub preview_width: usize,
    pub preview_height: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub params: LightsPreset,
    /// Preview frames rendered so far.
    pub frames_rendered: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LightsPreset;
    use crate::{LightingParams, ShadingConfig};

    #[test]
    fn wire_shapes() {
        let params = LightsPreset::from_params(&LightingParams::neutral(0), &ShadingConfig::default());
        let msg = serde_json::to_value(ClientMessage::SetParams { params: params.clone() }).unwrap();
        assert_eq!(msg["type"], "set_params");
        assert_eq!(msg["params"]["k"], 0);

        let ack = serde_json::to_value(ServerMessage::Ack(Ack { seq: 3, params })).unwrap();
        assert_eq!(ack["type"], "ack");
        assert_eq!(ack["seq"], 3);

        let frame = serde_json::to_string(&ServerMessage::Frame {
            seq: 1,
            width: 2,
            height: 3,
        })
        .unwrap();
        assert_eq!(frame, r#"{"type":"frame","seq":1,"width":2,"height":3}"#);

        let err: ServerMessage = serde_json::from_str(r#"{"type":"error","message":"bad"}"#).unwrap();
        assert_eq!(
            err,
            ServerMessage::Error(ErrorReply {
                message: "bad".into(),
                field: None
            })
        );
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"nope"}"#).is_err());
    }
}
