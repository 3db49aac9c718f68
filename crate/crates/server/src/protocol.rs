//! WebSocket wire format, protocol version 1.
//!
//! Every frame is a JSON object `{"type": ..., "seq": ..., "payload": {...}}`.
//! Client `seq` values are echoed in errors; server frames carry their own
//! per-connection `seq`, strictly increasing.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ulca::backward::Progress;
use ulca::session::StateView;
use ulca::solvers::Backend;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
struct RawMessage {
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default)]
    payload: Value,
}

/// Partial parameter update; absent fields keep their current value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsPatch {
    pub w_tg: Option<Vec<f64>>,
    pub w_bg: Option<Vec<f64>>,
    pub w_bw: Option<Vec<f64>>,
    /// A number fixes α; `null` or `"auto"` selects trace-ratio mode.
    #[serde(default, deserialize_with = "alpha_patch")]
    pub alpha: Option<Option<f64>>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub dprime: Option<usize>,
    pub backend: Option<Backend>,
}

fn alpha_patch<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
    use serde::de::Error;
    match Value::deserialize(d)? {
        Value::Null => Ok(Some(None)),
        Value::String(s) if s == "auto" => Ok(Some(None)),
        Value::Number(n) => n
            .as_f64()
            .map(|v| Some(Some(v)))
            .ok_or_else(|| D::Error::custom("alpha is not a finite number")),
        other => Err(D::Error::custom(format!(
            "alpha must be a number, null, or \"auto\", got {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovePayload {
    pub group: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalePayload {
    pub group: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisPayload {
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavePayload {
    pub name: String,
    #[serde(default)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestorePayload {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    SetParams(ParamsPatch),
    GestureMove(MovePayload),
    GestureScale(ScalePayload),
    DrawAxis(AxisPayload),
    Save(SavePayload),
    Restore(RestorePayload),
    ListSnapshots,
    Cancel,
    GetState,
}

/// Parse failure, with the client `seq` when it could be read.
#[derive(Debug, Clone, PartialEq)]
pub struct BadMessage {
    pub seq: Option<u64>,
    pub message: String,
}

fn payload<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, String> {
    // Payload-less messages may omit the field entirely.
    let v = if v.is_null() {
        Value::Object(Default::default())
    } else {
        v
    };
    serde_json::from_value(v).map_err(|e| e.to_string())
}

pub fn parse_client(text: &str) -> Result<(u64, ClientMessage), BadMessage> {
    let raw: RawMessage = serde_json::from_str(text).map_err(|e| BadMessage {
        seq: serde_json::from_str::<Value>(text)
            .ok()
            .and_then(|v| v.get("seq").and_then(Value::as_u64)),
        message: e.to_string(),
    })?;
    let seq = raw.seq;
    let msg = match raw.kind.as_str() {
        "set_params" => payload(raw.payload).map(ClientMessage::SetParams),
        "gesture_move" => payload(raw.payload).map(ClientMessage::GestureMove),
        "gesture_scale" => payload(raw.payload).map(ClientMessage::GestureScale),
        "draw_axis" => payload(raw.payload).map(ClientMessage::DrawAxis),
        "save" => payload(raw.payload).map(ClientMessage::Save),
        "restore" => payload(raw.payload).map(ClientMessage::Restore),
        "list_snapshots" => Ok(ClientMessage::ListSnapshots),
        "cancel" => Ok(ClientMessage::Cancel),
        "get_state" => Ok(ClientMessage::GetState),
        other => Err(format!("unknown message type `{other}`")),
    };
    msg.map(|m| (seq, m)).map_err(|message| BadMessage {
        seq: Some(seq),
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorPayload {
    /// Client `seq` of the message that failed, when known.
    pub seq: Option<u64>,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePayload {
    /// Session commit counter; increases with every state change.
    pub revision: u64,
    #[serde(flatten)]
    pub view: StateView,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressPayload {
    /// Client `seq` of the gesture being optimized.
    pub seq: u64,
    #[serde(flatten)]
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello { protocol: u32 },
    State(StatePayload),
    Progress(ProgressPayload),
    Error(ErrorPayload),
}

impl ServerMessage {
    pub fn error(seq: Option<u64>, code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorPayload {
            seq,
            code: code.into(),
            message: message.into(),
        })
    }

    /// Frame text with the connection's `seq` spliced in.
    pub fn to_frame(&self, seq: u64) -> String {
        let mut v = serde_json::to_value(self).expect("server messages serialize");
        v["seq"] = Value::from(seq);
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_params() {
        let (seq, msg) = parse_client(
            r#"{"type":"set_params","seq":4,"payload":{"alpha":"auto","w_tg":[1,0]}}"#,
        )
        .unwrap();
        assert_eq!(seq, 4);
        let ClientMessage::SetParams(p) = msg else {
            panic!()
        };
        assert_eq!(p.alpha, Some(None));
        assert_eq!(p.w_tg, Some(vec![1.0, 0.0]));
        assert_eq!(p.gamma0, None);

        let (_, msg) =
            parse_client(r#"{"type":"set_params","seq":5,"payload":{"alpha":2.5}}"#).unwrap();
        assert_eq!(
            msg,
            ClientMessage::SetParams(ParamsPatch {
                alpha: Some(Some(2.5)),
                ..Default::default()
            })
        );
        let (_, msg) = parse_client(r#"{"type":"set_params","seq":6,"payload":{}}"#).unwrap();
        assert_eq!(msg, ClientMessage::SetParams(ParamsPatch::default()));
    }

    #[test]
    fn payloadless_messages() {
        assert_eq!(
            parse_client(r#"{"type":"cancel","seq":1}"#).unwrap().1,
            ClientMessage::Cancel
        );
        assert_eq!(
            parse_client(r#"{"type":"list_snapshots","seq":2,"payload":{}}"#)
                .unwrap()
                .1,
            ClientMessage::ListSnapshots
        );
    }

    #[test]
    fn bad_messages_keep_seq_when_possible() {
        assert_eq!(parse_client("not json").unwrap_err().seq, None);
        let e = parse_client(r#"{"type":"warp","seq":9}"#).unwrap_err();
        assert_eq!(e.seq, Some(9));
        let e =
            parse_client(r#"{"type":"gesture_scale","seq":3,"payload":{"group":0}}"#).unwrap_err();
        assert_eq!(e.seq, Some(3));
        let e =
            parse_client(r#"{"type":"set_params","seq":7,"payload":{"alpha":[1]}}"#).unwrap_err();
        assert_eq!(e.seq, Some(7));
    }

    #[test]
    fn frames_carry_type_seq_payload() {
        let f = ServerMessage::Hello { protocol: 1 }.to_frame(0);
        let v: Value = serde_json::from_str(&f).unwrap();
        assert_eq!(v["type"], "hello");
        assert_eq!(v["seq"], 0);
        assert_eq!(v["payload"]["protocol"], 1);
        let e: Value =
            serde_json::from_str(&ServerMessage::error(Some(2), "BAD_MESSAGE", "x").to_frame(5))
                .unwrap();
        assert_eq!(e["payload"]["seq"], 2);
        assert_eq!(e["seq"], 5);
    }
}
