//! Re-runs the monitors and the reactor over recorded ticks and compares the
//! results with what was recorded.

use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::monitor::anomaly::{detect, AnomalyModel};
use crate::monitor::knowledge::model_digest;
use crate::pipeline::{function_verdict, react};
use crate::record;
use crate::recorder::Incident;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMismatch {
    pub tick: u64,
    pub field: String,
    pub recorded: String,
    pub replayed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ticks: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Replays `incident`. A model is required when the incident was recorded
/// with one, and its digest must match the recorded digest.
pub fn replay_incident(incident: &Incident, model: Option<&AnomalyModel>) -> Result<ReplayReport> {
    let ctx = &incident.header.context;
    let model = match (&ctx.model, model) {
        (None, _) => None,
        (Some(_), None) => {
            return Err(CageError::invalid(
                "replay",
                "incident was recorded with an anomaly model; pass the same model",
            ))
        }
        (Some(r), Some(m)) => {
            let d = model_digest(m);
            if d != r.digest {
                return Err(CageError::DigestMismatch {
                    model: d,
                    kb: r.digest.clone(),
                });
            }
            Some(m)
        }
    };

    let mut mismatches = Vec::new();
    for t in &incident.ticks {
        let fm = function_verdict(&t.truth, &t.source_lists, &t.mode_in, &ctx.safe_zone, &ctx.thresholds);
        let am = model.map(|m| detect(m, &t.raster, t.tick)).transpose()?;
        let r = react(
            &t.mode_in,
            &fm,
            am.as_ref(),
            &t.commands,
            &t.source_lists,
            &ctx.reactor,
            &ctx.thresholds,
        );
        let mut check = |field: &str, recorded: String, replayed: String| {
            if recorded != replayed {
                mismatches.push(ReplayMismatch {
                    tick: t.tick,
                    field: field.into(),
                    recorded,
                    replayed,
                });
            }
        };
        check("fm", record::encode(&t.fm), record::encode(&Some(&fm)));
        check("am", record::encode(&t.am), record::encode(&am));
        check("mode", record::encode(&t.mode), record::encode(&Some(&r.mode)));
        check("actions", record::encode(&t.actions), record::encode(&Some(&r.actions)));
        check("fused", record::encode(&t.fused), record::encode(&Some(&r.fused)));
    }
    Ok(ReplayReport {
        ticks: incident.ticks.len(),
        mismatches,
    })
}
