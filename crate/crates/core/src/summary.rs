//! Run summaries: flag counts, the mode trace and the final state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::reactor::ModeState;
use crate::scene::SourceId;
use crate::sim::runner::RunLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub tick: u64,
    pub state: ModeState,
    pub excluded: BTreeSet<SourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub n_ticks: usize,
    pub fm_flags: usize,
    pub am_flags: usize,
    pub first_fm_flag: Option<u64>,
    pub first_am_flag: Option<u64>,
    pub max_anomaly_score: Option<f64>,
    /// The initial mode, then every change.
    pub mode_trace: Vec<ModeChange>,
    pub final_mode: ModeState,
    pub final_excluded: BTreeSet<SourceId>,
    pub final_speed: f64,
    pub incidents: usize,
    pub commands_accepted: usize,
    pub commands_rejected: usize,
}

pub fn summarize(log: &RunLog, incidents: usize) -> Summary {
    let fm_ticks: Vec<u64> = log
        .ticks
        .iter()
        .filter(|t| t.fm.as_ref().is_some_and(|v| v.flag))
        .map(|t| t.tick)
        .collect();
    let am_ticks: Vec<u64> = log
        .ticks
        .iter()
        .filter(|t| t.am.as_ref().is_some_and(|v| v.flag))
        .map(|t| t.tick)
        .collect();
    let max_score = log
        .ticks
        .iter()
        .filter_map(|t| t.am.as_ref().map(|a| a.score))
        .reduce(f64::max);

    let mut trace: Vec<ModeChange> = Vec::new();
    if let Some(first) = log.ticks.first() {
        trace.push(ModeChange {
            tick: first.tick,
            state: first.mode_in.state,
            excluded: first.mode_in.excluded_sources.clone(),
        });
    }
    for t in &log.ticks {
        let m = t.mode_out();
        let last = trace.last();
        if last.is_none_or(|c| c.state != m.state || c.excluded != m.excluded_sources) {
            trace.push(ModeChange {
                tick: t.tick,
                state: m.state,
                excluded: m.excluded_sources.clone(),
            });
        }
    }
    let (accepted, rejected) = log
        .ticks
        .iter()
        .flat_map(|t| t.command_acks())
        .fold(
            (0, 0),
            |(a, r), ack| if ack.is_accepted() { (a + 1, r) } else { (a, r + 1) },
        );
    let final_mode = log.final_mode();

    Summary {
        run_id: log.header.run_id.clone(),
        n_ticks: log.ticks.len(),
        fm_flags: fm_ticks.len(),
        am_flags: am_ticks.len(),
        first_fm_flag: fm_ticks.first().copied(),
        first_am_flag: am_ticks.first().copied(),
        max_anomaly_score: max_score,
        mode_trace: trace,
        final_mode: final_mode.map_or(ModeState::Nominal, |m| m.state),
        final_excluded: final_mode.map(|m| m.excluded_sources.clone()).unwrap_or_default(),
        final_speed: log.ticks.last().map_or(0.0, |t| t.truth.ego.speed),
        incidents,
        commands_accepted: accepted,
        commands_rejected: rejected,
    }
}
