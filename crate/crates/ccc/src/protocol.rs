//! Wire envelope shared by every message in both directions.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cage_core::command::{CommandAck, OperatorCommand};
use cage_core::telemetry::TelemetryFrame;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    /// Server greeting, first frame on every connection.
    Hello,
    Telemetry,
    Command,
    Ack,
}

/// `{type, seq, tick, payload}`. `seq` counts messages per connection and
/// direction; `tick` is the simulation tick the message refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub seq: u64,
    pub tick: u64,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub version: String,
    pub run_id: Option<String>,
}

impl Envelope {
    pub fn new(kind: MessageType, seq: u64, tick: u64, payload: impl Serialize) -> Self {
        Envelope {
            kind,
            seq,
            tick,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn telemetry(seq: u64, frame: &TelemetryFrame) -> Self {
        Envelope::new(MessageType::Telemetry, seq, frame.tick, frame)
    }

    pub fn ack(seq: u64, tick: u64, ack: &CommandAck) -> Self {
        Envelope::new(MessageType::Ack, seq, tick, ack)
    }

    pub fn command(seq: u64, tick: u64, cmd: &OperatorCommand) -> Self {
        Envelope::new(MessageType::Command, seq, tick, cmd)
    }

    /// One line of JSON, no trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

/// Result of parsing an inbound text frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Command(OperatorCommand),
    /// Could not be read as a command; `command_id` is recovered when the
    /// payload carries one so the rejection can be correlated.
    Malformed {
        command_id: String,
        reason: String,
    },
}

pub fn parse_inbound(text: &str) -> Inbound {
    let env: Envelope = match serde_json::from_str(text.trim_end()) {
        Ok(e) => e,
        Err(e) => {
            return Inbound::Malformed {
                command_id: String::new(),
                reason: format!("malformed envelope: {e}"),
            }
        }
    };
    let command_id = env
        .payload
        .get("command_id")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    if env.kind != MessageType::Command {
        return Inbound::Malformed {
            command_id,
            reason: format!("clients may only send command messages, got {:?}", env.kind),
        };
    }
    match serde_json::from_value::<OperatorCommand>(env.payload) {
        Ok(c) if c.command_id.is_empty() => Inbound::Malformed {
            command_id,
            reason: "empty command_id".into(),
        },
        Ok(c) => Inbound::Command(c),
        Err(e) => Inbound::Malformed {
            command_id,
            reason: format!("malformed command: {e}"),
        },
    }
}
