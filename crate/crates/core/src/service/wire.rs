//! JSON messages exchanged with viewers over the websocket. Every server
//! message carries a per-connection sequence number; a `gap` event marks
//! messages dropped because the viewer fell behind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;
/// Largest accepted client message, in bytes.
pub const MAX_CLIENT_MESSAGE: usize = 4096;
/// Largest impulse a viewer may apply (N·s per axis).
pub const MAX_IMPULSE: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    RequestSwitch {
        target: String,
    },
    /// Impulse on a link (the torso by default) at its centre, world frame.
    Perturb {
        impulse: [f64; 2],
        #[serde(default)]
        link: Option<String>,
    },
    Pause,
    Resume,
    /// Restart from the initial state, optionally under another policy.
    Reset {
        #[serde(default)]
        policy: Option<String>,
    },
}

/// Parses and range-checks one client message.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, String> {
    if text.len() > MAX_CLIENT_MESSAGE {
        return Err(format!("message longer than {MAX_CLIENT_MESSAGE} bytes"));
    }
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    if let ClientMessage::Perturb { impulse, .. } = &msg {
        if impulse.iter().any(|v| !v.is_finite() || v.abs() > MAX_IMPULSE) {
            return Err(format!("impulse components must be finite and at most {MAX_IMPULSE} in magnitude"));
        }
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkInfo {
    pub name: String,
    pub half_extents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendingInfo {
    pub target: String,
    /// Frames waited so far.
    pub age: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Requested,
    Superseded,
    Switched,
    Rejected,
    Recovered,
    Fell,
    Reset,
    Paused,
    Resumed,
    Perturbed,
    /// Messages were dropped for this connection.
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    Hello {
        version: u32,
        policies: Vec<String>,
        active: String,
        thresholds: BTreeMap<String, f64>,
        response_window: usize,
        /// Whether this connection may send commands.
        driver: bool,
        fps: f64,
        links: Vec<LinkInfo>,
    },
    Frame {
        /// Simulation frame.
        t: u64,
        /// Link centre `[x, z, angle]`, in link order.
        links: Vec<[f64; 3]>,
        active: String,
        /// Gate score of every policy.
        scores: BTreeMap<String, f64>,
        pending: Option<PendingInfo>,
        paused: bool,
    },
    Event {
        t: u64,
        kind: EventKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<f64>,
        /// Frames waited, for rejections; messages lost, for gaps.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<u64>,
    },
    Error {
        message: String,
        /// Valid choices, when the error names an unknown one.
        #[serde(default)]
        valid: Vec<String>,
    },
}

impl ServerMessage {
    pub fn event(t: u64, kind: EventKind) -> Self {
        ServerMessage::Event { t, kind, from: None, to: None, score: None, count: None }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into(), valid: Vec::new() }
    }
}

/// A server message as sent on one connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    #[serde(flatten)]
    pub body: ServerMessage,
}
