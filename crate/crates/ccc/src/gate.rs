//! Session-side command admission: de-duplication and the handover rule.
//! The reactor re-validates every command; its verdict travels back in the
//! telemetry `command_acks`.

use std::collections::HashSet;

use cage_core::command::{CommandAck, CommandKind, OperatorCommand};
use cage_core::reactor::{ModeState, SystemMode};
use cage_core::telemetry::TelemetryFrame;

#[derive(Debug, Default)]
pub struct CommandGate {
    seen: HashSet<String>,
    /// An accepted `ack_handover` the reactor has not answered yet.
    pending_handover: Option<String>,
    mode: Option<SystemMode>,
}

impl CommandGate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Updates the gate's view of the vehicle from a telemetry frame.
    pub fn observe(&mut self, frame: &TelemetryFrame) {
        if let Some(id) = &self.pending_handover {
            if frame.command_acks.iter().any(|a| &a.command_id == id) {
                self.pending_handover = None;
            }
        }
        self.mode = Some(frame.mode.clone());
    }

    fn handover_done(&self) -> bool {
        self.pending_handover.is_some() || self.mode.as_ref().is_some_and(|m| m.handover_confirmed)
    }

    /// Accepts the command for the reactor queue or rejects it. A repeated
    /// `command_id` is rejected without any effect, whatever its content.
    pub fn admit(&mut self, cmd: &OperatorCommand) -> CommandAck {
        if cmd.command_id.is_empty() {
            return CommandAck::rejected("", "empty command_id");
        }
        if self.seen.contains(&cmd.command_id) {
            return CommandAck::rejected(&cmd.command_id, "duplicate command_id");
        }
        if matches!(cmd.kind, CommandKind::Resume) {
            if let Some(m) = &self.mode {
                let off_primary = !matches!(m.state, ModeState::Nominal | ModeState::DegradedPrimary);
                if off_primary && !self.handover_done() {
                    self.seen.insert(cmd.command_id.clone());
                    return CommandAck::rejected(&cmd.command_id, "resume requires ack_handover first");
                }
            }
        }
        self.seen.insert(cmd.command_id.clone());
        if matches!(cmd.kind, CommandKind::AckHandover) {
            self.pending_handover = Some(cmd.command_id.clone());
        }
        CommandAck::accepted(&cmd.command_id)
    }
}
