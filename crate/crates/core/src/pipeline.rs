//! The cage pipeline as tick hooks, and a one-call runner that assembles it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::command::OperatorCommand;
use crate::error::{CageError, Result};
use crate::fallback::{deterministic_perception, FallbackConfig};
use crate::monitor::anomaly::{detect, AmVerdict, AnomalyModel};
use crate::monitor::function::{
    compute_safe_zone, match_across_sources, validate, FmVerdict, HaraThresholds, SafeZoneParams,
};
use crate::monitor::knowledge::model_digest;
use crate::perception::{fuse, FusedList, PerceptionPath};
use crate::reactor::{escalate, step_reactor, voter_filter, ReactorActions, ReactorConfig, SwitchPosition, SystemMode};
use crate::recorder::{Incident, IncidentContext, ModelRef, Recorder, RecorderStage};
use crate::scene::{ObjectList, SceneState};
use crate::seed::derive_seed;
use crate::sim::runner::{run_scenario_with, CommandSource, RunLog, Stage, TickFrame, TickHook};
use crate::sim::scenario::Scenario;
use crate::summary::{summarize, Summary};
use crate::telemetry::{DropOldestQueue, TelemetryFrame, TelemetryStage};

/// Runs every AI path and, in shadow, the deterministic fallback path.
pub struct PerceptionStage {
    paths: Vec<PerceptionPath>,
    fallback: FallbackConfig,
}

impl PerceptionStage {
    pub fn new(scenario: &Scenario) -> Self {
        PerceptionStage {
            paths: scenario
                .effective_models()
                .into_iter()
                .map(PerceptionPath::new)
                .collect(),
            fallback: scenario.fallback_perception.clone(),
        }
    }
}

pub fn perception_seed(root: u64, source: &str, tick: u64) -> u64 {
    derive_seed(root, &format!("perception/{source}"), tick)
}

impl TickHook for PerceptionStage {
    fn name(&self) -> &str {
        "perception"
    }

    fn stage(&self) -> Stage {
        Stage::Perception
    }

    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String> {
        let (seed, tick) = (frame.seed, frame.tick);
        frame.source_lists = self
            .paths
            .iter_mut()
            .map(|p| {
                let s = perception_seed(seed, p.id().as_str(), tick);
                p.step(&frame.truth, s)
            })
            .collect();
        frame.fallback_list = Some(deterministic_perception(&frame.cloud, &self.fallback));
        Ok(())
    }
}

/// Function monitor over the AI paths active at tick start, plus the
/// anomaly monitor when a model is loaded.
pub struct MonitorStage {
    pub safe_zone: SafeZoneParams,
    pub thresholds: HaraThresholds,
    pub model: Option<Arc<AnomalyModel>>,
}

/// Function-monitor verdict for one tick, as the pipeline computes it.
pub fn function_verdict(
    truth: &SceneState,
    lists: &[ObjectList],
    mode_in: &SystemMode,
    params: &SafeZoneParams,
    thresholds: &HaraThresholds,
) -> FmVerdict {
    let zone = compute_safe_zone(&truth.ego, params);
    let active = mode_in.active_ai();
    let monitored: Vec<ObjectList> = lists.iter().filter(|l| active.contains(&l.source)).cloned().collect();
    validate(&monitored, &zone, thresholds, truth.tick)
}

impl TickHook for MonitorStage {
    fn name(&self) -> &str {
        "monitors"
    }

    fn stage(&self) -> Stage {
        Stage::Monitors
    }

    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String> {
        let fm = function_verdict(
            &frame.truth,
            &frame.source_lists,
            &frame.mode_in,
            &self.safe_zone,
            &self.thresholds,
        );
        frame.zone = Some(fm.zone_used.clone());
        frame.fm = Some(fm);
        frame.am = match &self.model {
            Some(m) => Some(detect(m, &frame.raster, frame.tick).map_err(|e| e.to_string())?),
            None => None,
        };
        Ok(())
    }
}

/// Result of the reactor stage for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub mode: SystemMode,
    pub actions: ReactorActions,
    pub fused: FusedList,
}

/// Reactor step followed by the voter and fusion. Escalates to a
/// minimal-risk stop when the voter has nothing left to forward.
pub fn react(
    mode_in: &SystemMode,
    fm: &FmVerdict,
    am: Option<&AmVerdict>,
    commands: &[OperatorCommand],
    lists: &[ObjectList],
    cfg: &ReactorConfig,
    thresholds: &HaraThresholds,
) -> Reaction {
    let (mut mode, mut actions) = step_reactor(mode_in, fm, am, commands, cfg);
    let mut voter = voter_filter(lists, &mode);
    if voter.escalation {
        let (m, a) = escalate(&mode, fm.tick, cfg);
        actions.record_triggers.extend(a.record_triggers);
        actions.speed = a.speed;
        actions.switch = a.switch;
        mode = m;
        voter = voter_filter(lists, &mode);
    }
    let matches = match_across_sources(&voter.lists, thresholds);
    let mut fused = fuse(&voter.lists, &matches);
    fused.tick = fm.tick;
    Reaction { mode, actions, fused }
}

pub struct ReactorStage {
    pub config: ReactorConfig,
    pub thresholds: HaraThresholds,
}

impl TickHook for ReactorStage {
    fn name(&self) -> &str {
        "reactor"
    }

    fn stage(&self) -> Stage {
        Stage::Reactor
    }

    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String> {
        let fm = frame.fm.as_ref().ok_or("no function-monitor verdict for this tick")?;
        let r = react(
            &frame.mode_in,
            fm,
            frame.am.as_ref(),
            &frame.commands,
            &frame.source_lists,
            &self.config,
            &self.thresholds,
        );
        frame.output = Some(match r.actions.switch {
            SwitchPosition::Primary => r.fused.to_object_list(),
            SwitchPosition::Deterministic => frame
                .fallback_list
                .clone()
                .unwrap_or_else(|| ObjectList::empty(frame.tick, crate::scene::SourceId::deterministic())),
        });
        frame.fused = Some(r.fused);
        frame.mode = Some(r.mode);
        frame.actions = Some(r.actions);
        Ok(())
    }
}

#[derive(Default)]
pub struct CageOptions {
    pub model: Option<AnomalyModel>,
    /// Where the run log, incidents and summary go. `None` keeps everything
    /// in memory.
    pub out_dir: Option<PathBuf>,
    pub telemetry: Option<Arc<DropOldestQueue<TelemetryFrame>>>,
    /// Wall-clock seconds per simulated second; `None` runs flat out.
    pub realtime: Option<f64>,
}

#[derive(Debug)]
pub struct CageRun {
    pub log: RunLog,
    pub incidents: Vec<Incident>,
    pub incident_paths: Vec<PathBuf>,
    pub summary: Summary,
}

pub fn reactor_config(scenario: &Scenario) -> ReactorConfig {
    ReactorConfig {
        brake_decel: scenario.function_monitor.safe_zone.a_max,
        min_agreeing_sources: scenario.function_monitor.thresholds.min_agreeing_sources,
    }
}

pub fn incident_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("incidents").join(run_id)
}

/// Runs the scenario through the full pipeline and, with an output
/// directory, writes `runlog.jsonl`, `summary.json` and
/// `incidents/<run>/<tick>.inc`.
pub fn run_cage(scenario: &Scenario, options: CageOptions, commands: &mut dyn CommandSource) -> Result<CageRun> {
    let fm_cfg = &scenario.function_monitor;
    let model = options.model.map(Arc::new);
    if let Some(m) = &model {
        if m.autoencoder.input != scenario.raster.size * scenario.raster.size {
            return Err(CageError::invalid(
                "anomaly model",
                format!(
                    "expects {} inputs, the scenario raster has {}",
                    m.autoencoder.input,
                    scenario.raster.size * scenario.raster.size
                ),
            ));
        }
    }
    let run_id = scenario.run_id();
    let context = IncidentContext {
        run_id: run_id.clone(),
        seed: scenario.seed,
        dt: scenario.dt,
        safe_zone: fm_cfg.safe_zone,
        thresholds: fm_cfg.thresholds.clone(),
        reactor: reactor_config(scenario),
        raster: scenario.raster,
        model: model.as_ref().map(|m| ModelRef {
            version: m.version,
            digest: model_digest(m),
        }),
    };

    let mut perception = PerceptionStage::new(scenario);
    let mut monitors = MonitorStage {
        safe_zone: fm_cfg.safe_zone,
        thresholds: fm_cfg.thresholds.clone(),
        model,
    };
    let mut reactor = ReactorStage {
        config: reactor_config(scenario),
        thresholds: fm_cfg.thresholds.clone(),
    };
    let inc_dir = options.out_dir.as_ref().map(|o| incident_dir(o, &run_id));
    let mut recorder = RecorderStage {
        recorder: Recorder::new(scenario.recorder, context, inc_dir),
    };
    let mut telemetry = TelemetryStage::new(run_id, options.telemetry);
    if let Some(f) = options.realtime.filter(|f| *f > 0.0) {
        telemetry = telemetry.paced(std::time::Duration::from_secs_f64(scenario.dt * f));
    }

    let log = run_scenario_with(
        scenario,
        &mut [
            &mut perception,
            &mut monitors,
            &mut reactor,
            &mut recorder,
            &mut telemetry,
        ],
        commands,
    )?;
    let incidents = std::mem::take(&mut recorder.recorder.incidents);
    let incident_paths = std::mem::take(&mut recorder.recorder.written);
    let summary = summarize(&log, incidents.len());
    if let Some(out) = &options.out_dir {
        log.write(&out.join("runlog.jsonl"))?;
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        crate::record::write_atomic(&out.join("summary.json"), text.as_bytes())?;
    }
    Ok(CageRun {
        log,
        incidents,
        incident_paths,
        summary,
    })
}
