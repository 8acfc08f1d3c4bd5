//! Fail-operational reaction: the system-mode state machine, the voter and
//! the AI/deterministic switch.
//!
//! Each tick the reactor first applies operator commands in arrival order,
//! then monitor verdicts by priority (anomaly before function). MinimalRisk
//! and RemoteOperated ignore monitor events; only an operator resume after
//! `ack_handover` leaves them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::command::{CommandAck, CommandKind, OperatorCommand};
use crate::monitor::anomaly::AmVerdict;
use crate::monitor::function::{required_confirmations, FmVerdict};
use crate::scene::{ObjectList, SourceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeState {
    Nominal,
    DegradedPrimary,
    FallbackDeterministic,
    MinimalRisk,
    RemoteOperated,
}

impl ModeState {
    /// States monitor verdicts cannot leave.
    pub fn is_absorbing(self) -> bool {
        matches!(self, ModeState::MinimalRisk | ModeState::RemoteOperated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responsibility {
    Vehicle,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemMode {
    pub state: ModeState,
    pub active_sources: BTreeSet<SourceId>,
    pub excluded_sources: BTreeSet<SourceId>,
    pub responsibility: Responsibility,
    /// Every configured AI path, active or not.
    pub ai_sources: BTreeSet<SourceId>,
    /// Set by `ack_handover`, consumed by the handback.
    pub handover_confirmed: bool,
}

impl SystemMode {
    pub fn nominal(ai_sources: impl IntoIterator<Item = SourceId>) -> Self {
        let ai: BTreeSet<SourceId> = ai_sources.into_iter().collect();
        SystemMode {
            state: ModeState::Nominal,
            active_sources: ai.clone(),
            excluded_sources: BTreeSet::new(),
            responsibility: Responsibility::Vehicle,
            ai_sources: ai,
            handover_confirmed: false,
        }
    }

    /// AI paths currently feeding the voter.
    pub fn active_ai(&self) -> BTreeSet<SourceId> {
        self.active_sources.intersection(&self.ai_sources).cloned().collect()
    }

    pub fn switch(&self) -> SwitchPosition {
        if self.state == ModeState::FallbackDeterministic {
            SwitchPosition::Deterministic
        } else {
            SwitchPosition::Primary
        }
    }

    /// Checks the structural invariants; returns the first one broken.
    pub fn check(&self) -> Result<(), String> {
        if self
            .active_sources
            .intersection(&self.excluded_sources)
            .next()
            .is_some()
        {
            return Err("active and excluded sources overlap".into());
        }
        if !self.excluded_sources.is_subset(&self.ai_sources) {
            return Err("excluded source is not an AI path".into());
        }
        if self.state == ModeState::FallbackDeterministic
            && self.active_sources != BTreeSet::from([SourceId::deterministic()])
        {
            return Err("fallback mode must run the deterministic path alone".into());
        }
        Ok(())
    }

    fn enter_minimal_risk(&mut self) {
        self.state = ModeState::MinimalRisk;
        self.responsibility = Responsibility::Operator;
        self.handover_confirmed = false;
    }

    fn primary_state(&self) -> ModeState {
        if self.excluded_sources.is_empty() {
            ModeState::Nominal
        } else {
            ModeState::DegradedPrimary
        }
    }

    fn hand_back(&mut self) {
        self.responsibility = Responsibility::Vehicle;
        self.handover_confirmed = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchPosition {
    Primary,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedCommand {
    /// Follow the scenario's driving script.
    Follow,
    /// Straight-line stop at this deceleration.
    Brake { decel: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "monitor", rename_all = "snake_case")]
pub enum RecordTrigger {
    Function { tick: u64, implicated: BTreeSet<SourceId> },
    Anomaly { tick: u64, score: f64 },
    Voter { tick: u64 },
    Operator { tick: u64, command_id: String },
}

impl RecordTrigger {
    pub fn tick(&self) -> u64 {
        match self {
            RecordTrigger::Function { tick, .. }
            | RecordTrigger::Anomaly { tick, .. }
            | RecordTrigger::Voter { tick }
            | RecordTrigger::Operator { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactorActions {
    pub voter_exclusions: BTreeSet<SourceId>,
    pub switch: SwitchPosition,
    pub speed: SpeedCommand,
    pub record_triggers: Vec<RecordTrigger>,
    pub command_acks: Vec<CommandAck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactorConfig {
    /// Deceleration of the minimal-risk stop.
    pub brake_decel: f64,
    pub min_agreeing_sources: Option<usize>,
}

impl Default for ReactorConfig {
    fn default() -> Self {
        ReactorConfig {
            brake_decel: 5.0,
            min_agreeing_sources: None,
        }
    }
}

/// One reactor step. Pure: the same inputs always give the same outputs.
pub fn step_reactor(
    mode: &SystemMode,
    fm: &FmVerdict,
    am: Option<&AmVerdict>,
    commands: &[OperatorCommand],
    cfg: &ReactorConfig,
) -> (SystemMode, ReactorActions) {
    let tick = fm.tick;
    let mut next = mode.clone();
    let mut acks = Vec::with_capacity(commands.len());
    let mut triggers = Vec::new();

    for cmd in commands {
        match apply_command(&mut next, &cmd.kind) {
            Ok(()) => {
                if matches!(cmd.kind, CommandKind::EmergencyStop) {
                    triggers.push(RecordTrigger::Operator {
                        tick,
                        command_id: cmd.command_id.clone(),
                    });
                }
                acks.push(CommandAck::accepted(&cmd.command_id));
            }
            Err(reason) => {
                log::info!(
                    "tick {tick}: rejected {} ({}): {reason}",
                    cmd.command_id,
                    cmd.kind.name()
                );
                acks.push(CommandAck::rejected(&cmd.command_id, reason));
            }
        }
    }

    let am_flag = am.filter(|v| v.flag);
    if let Some(v) = am_flag {
        triggers.push(RecordTrigger::Anomaly { tick, score: v.score });
    }
    if fm.flag {
        triggers.push(RecordTrigger::Function {
            tick,
            implicated: fm.implicated_sources.clone(),
        });
    }

    if !next.state.is_absorbing() {
        if am_flag.is_some() {
            next.state = ModeState::FallbackDeterministic;
            next.active_sources = BTreeSet::from([SourceId::deterministic()]);
        } else if fm.flag && next.state != ModeState::FallbackDeterministic {
            let active = next.active_ai();
            let implicated: BTreeSet<SourceId> = fm.implicated_sources.intersection(&active).cloned().collect();
            let survivors: BTreeSet<SourceId> = active.difference(&implicated).cloned().collect();
            let needed = required_confirmations(cfg.min_agreeing_sources, active.len());
            if !implicated.is_empty() && survivors.len() >= needed {
                next.state = ModeState::DegradedPrimary;
                next.excluded_sources.extend(implicated);
                next.active_sources = survivors;
            } else {
                next.enter_minimal_risk();
            }
        }
    }

    let actions = actions_for(&next, cfg, triggers, acks);
    (next, actions)
}

fn actions_for(
    mode: &SystemMode,
    cfg: &ReactorConfig,
    record_triggers: Vec<RecordTrigger>,
    command_acks: Vec<CommandAck>,
) -> ReactorActions {
    ReactorActions {
        voter_exclusions: mode.excluded_sources.clone(),
        switch: mode.switch(),
        speed: if mode.state == ModeState::MinimalRisk {
            SpeedCommand::Brake { decel: cfg.brake_decel }
        } else {
            SpeedCommand::Follow
        },
        record_triggers,
        command_acks,
    }
}

fn apply_command(mode: &mut SystemMode, kind: &CommandKind) -> Result<(), String> {
    match kind {
        CommandKind::EmergencyStop => {
            mode.enter_minimal_risk();
            Ok(())
        }
        CommandKind::AckHandover => {
            if mode.state == ModeState::Nominal {
                return Err("no handover pending in nominal mode".into());
            }
            mode.responsibility = Responsibility::Operator;
            mode.handover_confirmed = true;
            Ok(())
        }
        CommandKind::Resume => {
            if matches!(mode.state, ModeState::Nominal | ModeState::DegradedPrimary) {
                return Err("already running on the primary path".into());
            }
            if !mode.handover_confirmed {
                return Err("resume requires a prior ack_handover".into());
            }
            let active: BTreeSet<SourceId> = mode.ai_sources.difference(&mode.excluded_sources).cloned().collect();
            if active.is_empty() {
                return Err("every AI path is excluded; restore a source first".into());
            }
            mode.active_sources = active;
            mode.state = mode.primary_state();
            mode.hand_back();
            Ok(())
        }
        CommandKind::RestoreSource { source } => {
            if !mode.excluded_sources.contains(source) {
                return Err(format!("source {source} is not excluded"));
            }
            if !mode.handover_confirmed {
                return Err("restore requires a prior ack_handover".into());
            }
            mode.excluded_sources.remove(source);
            if matches!(mode.state, ModeState::Nominal | ModeState::DegradedPrimary) {
                mode.active_sources.insert(source.clone());
                mode.state = mode.primary_state();
                mode.hand_back();
            }
            Ok(())
        }
        CommandKind::SetMode { mode: target } => {
            if mode.state.is_absorbing() && *target != ModeState::MinimalRisk {
                return Err(format!("{:?} is left only by ack_handover and resume", mode.state));
            }
            match target {
                ModeState::MinimalRisk => mode.enter_minimal_risk(),
                ModeState::RemoteOperated => {
                    mode.state = ModeState::RemoteOperated;
                    mode.responsibility = Responsibility::Operator;
                    mode.handover_confirmed = false;
                }
                ModeState::FallbackDeterministic => {
                    mode.state = ModeState::FallbackDeterministic;
                    mode.active_sources = BTreeSet::from([SourceId::deterministic()]);
                }
                ModeState::Nominal | ModeState::DegradedPrimary => {
                    return Err("primary modes are entered with resume or restore_source".into());
                }
            }
            Ok(())
        }
    }
}

/// Escalation of an empty voter output to a minimal-risk stop.
pub fn escalate(mode: &SystemMode, tick: u64, cfg: &ReactorConfig) -> (SystemMode, ReactorActions) {
    let mut next = mode.clone();
    next.enter_minimal_risk();
    let actions = actions_for(&next, cfg, vec![RecordTrigger::Voter { tick }], Vec::new());
    (next, actions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoterOutput {
    pub lists: Vec<ObjectList>,
    /// Every AI list was excluded while the primary path is selected.
    pub escalation: bool,
}

/// Forwards the lists of active, non-excluded sources to fusion.
pub fn voter_filter(lists: &[ObjectList], mode: &SystemMode) -> VoterOutput {
    let forwarded: Vec<ObjectList> = lists
        .iter()
        .filter(|l| !mode.excluded_sources.contains(&l.source) && mode.active_sources.contains(&l.source))
        .cloned()
        .collect();
    let escalation = forwarded.is_empty() && !lists.is_empty() && mode.switch() == SwitchPosition::Primary;
    VoterOutput {
        lists: forwarded,
        escalation,
    }
}
