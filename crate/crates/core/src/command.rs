//! Operator interventions arriving from the command control center.

use serde::{Deserialize, Serialize};

use crate::reactor::ModeState;
use crate::scene::SourceId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum CommandKind {
    EmergencyStop,
    /// Hand control back to the vehicle; needs a prior `ack_handover`.
    Resume,
    SetMode {
        mode: ModeState,
    },
    RestoreSource {
        source: SourceId,
    },
    /// The operator confirms the issue is resolved and accepts the handback.
    AckHandover,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::EmergencyStop => "emergency_stop",
            CommandKind::Resume => "resume",
            CommandKind::SetMode { .. } => "set_mode",
            CommandKind::RestoreSource { .. } => "restore_source",
            CommandKind::AckHandover => "ack_handover",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCommand {
    pub command_id: String,
    #[serde(flatten)]
    pub kind: CommandKind,
    /// Client-side timestamp, carried through untouched.
    #[serde(default)]
    pub issued_at: f64,
}

impl OperatorCommand {
    pub fn new(command_id: impl Into<String>, kind: CommandKind) -> Self {
        OperatorCommand {
            command_id: command_id.into(),
            kind,
            issued_at: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandAck {
    pub command_id: String,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CommandAck {
    pub fn accepted(command_id: impl Into<String>) -> Self {
        CommandAck {
            command_id: command_id.into(),
            status: AckStatus::Accepted,
            reason: None,
        }
    }

    pub fn rejected(command_id: impl Into<String>, reason: impl Into<String>) -> Self {
        CommandAck {
            command_id: command_id.into(),
            status: AckStatus::Rejected,
            reason: Some(reason.into()),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == AckStatus::Accepted
    }
}
