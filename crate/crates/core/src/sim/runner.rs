//! The fixed-step tick loop.
//!
//! The loop owns the world: it advances the ego vehicle and the scripted
//! objects, runs the sensors and hands each tick's [`TickFrame`] to the
//! registered hooks in stage order. Hooks fill in their part of the frame;
//! the loop reads back the reactor's speed command to drive the ego vehicle.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::command::{CommandAck, OperatorCommand};
use crate::error::{CageError, Result};
use crate::monitor::anomaly::AmVerdict;
use crate::monitor::function::{FmVerdict, SafeZone};
use crate::perception::FusedList;
use crate::raster::{rasterize_scene, SceneRaster};
use crate::reactor::{ReactorActions, SpeedCommand, SystemMode};
use crate::record;
use crate::scene::{ObjectList, PointCloud, SceneState, SourceId};
use crate::seed;
use crate::sim::kinematics::{step_ego, EgoCommand};
use crate::sim::lidar::scan_lidar;
use crate::sim::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perception,
    Monitors,
    Reactor,
    Recorder,
    Telemetry,
}

/// Everything known about one tick. The loop fills the sensor fields and
/// `mode_in`; hooks fill the rest as the tick passes through the stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TickFrame {
    pub seed: u64,
    pub dt: f64,
    pub tick: u64,
    pub time: f64,
    pub truth: SceneState,
    pub cloud: PointCloud,
    pub raster: SceneRaster,
    /// Operator commands drained at tick start, in arrival order.
    pub commands: Vec<OperatorCommand>,
    /// Mode at tick start.
    pub mode_in: SystemMode,

    pub source_lists: Vec<ObjectList>,
    pub fallback_list: Option<ObjectList>,
    pub zone: Option<SafeZone>,
    pub fm: Option<FmVerdict>,
    pub am: Option<AmVerdict>,
    pub mode: Option<SystemMode>,
    pub actions: Option<ReactorActions>,
    pub fused: Option<FusedList>,
    /// What the switch forwards downstream.
    pub output: Option<ObjectList>,
    /// First-trigger ticks of incidents still collecting.
    pub open_incidents: Vec<u64>,
    pub alerts: Vec<String>,
}

impl TickFrame {
    pub fn to_record(&self, with_cloud: bool) -> TickRecord {
        TickRecord {
            tick: self.tick,
            time: self.time,
            truth: self.truth.clone(),
            cloud_points: self.cloud.points.len(),
            cloud: with_cloud.then(|| self.cloud.clone()),
            raster: self.raster.clone(),
            commands: self.commands.clone(),
            mode_in: self.mode_in.clone(),
            source_lists: self.source_lists.clone(),
            fallback_list: self.fallback_list.clone(),
            fm: self.fm.clone(),
            am: self.am.clone(),
            mode: self.mode.clone(),
            actions: self.actions.clone(),
            fused: self.fused.clone(),
            output: self.output.clone(),
            alerts: self.alerts.clone(),
        }
    }
}

/// Serialized form of a tick, used by the run log and incident files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub truth: SceneState,
    pub cloud_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PointCloud>,
    pub raster: SceneRaster,
    pub commands: Vec<OperatorCommand>,
    pub mode_in: SystemMode,
    pub source_lists: Vec<ObjectList>,
    pub fallback_list: Option<ObjectList>,
    pub fm: Option<FmVerdict>,
    pub am: Option<AmVerdict>,
    pub mode: Option<SystemMode>,
    pub actions: Option<ReactorActions>,
    pub fused: Option<FusedList>,
    pub output: Option<ObjectList>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alerts: Vec<String>,
}

impl TickRecord {
    pub fn command_acks(&self) -> &[CommandAck] {
        self.actions.as_ref().map(|a| a.command_acks.as_slice()).unwrap_or(&[])
    }

    /// Mode after the tick (the incoming mode when no reactor ran).
    pub fn mode_out(&self) -> &SystemMode {
        self.mode.as_ref().unwrap_or(&self.mode_in)
    }
}

pub trait TickHook {
    fn name(&self) -> &str;
    fn stage(&self) -> Stage;
    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String>;
    /// Called once after the last tick.
    fn finish(&mut self, _last_tick: Option<u64>) {}
}

/// Source of operator commands, drained at the start of every tick.
pub trait CommandSource {
    fn drain(&mut self, tick: u64, time: f64) -> Vec<OperatorCommand>;
}

impl CommandSource for std::sync::mpsc::Receiver<OperatorCommand> {
    fn drain(&mut self, _tick: u64, _time: f64) -> Vec<OperatorCommand> {
        self.try_iter().collect()
    }
}

/// No commands.
pub struct NoCommands;

impl CommandSource for NoCommands {
    fn drain(&mut self, _tick: u64, _time: f64) -> Vec<OperatorCommand> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub n_ticks: u64,
    pub ai_sources: Vec<SourceId>,
    /// SHA-256 of the canonical scenario encoding.
    pub scenario_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RunLogLine {
    Header(RunHeader),
    Tick(Box<TickRecord>),
}

/// Complete tick-indexed record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub ticks: Vec<TickRecord>,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = record::encode(&RunLogLine::Header(self.header.clone()));
        out.push('\n');
        for t in &self.ticks {
            out.push_str(&record::encode(&RunLogLine::Tick(Box::new(t.clone()))));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CageError::io(dir, e))?;
        }
        record::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn read(path: &Path) -> Result<RunLog> {
        let mut header = None;
        let mut ticks = Vec::new();
        for (n, line) in record::read_raw_lines(path)? {
            match record::decode_at(path, n, &line)? {
                RunLogLine::Header(h) if header.is_none() => header = Some(h),
                RunLogLine::Header(_) => {
                    return Err(CageError::Parse {
                        path: path.display().to_string(),
                        line: n,
                        message: "second header".into(),
                    })
                }
                RunLogLine::Tick(t) => ticks.push(*t),
            }
        }
        let header = header.ok_or_else(|| CageError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "missing header".into(),
        })?;
        Ok(RunLog { header, ticks })
    }

    pub fn final_mode(&self) -> Option<&SystemMode> {
        self.ticks.last().map(|t| t.mode_out())
    }
}

pub fn scenario_digest(scenario: &Scenario) -> String {
    hex::encode(Sha256::digest(record::encode(scenario).as_bytes()))
}

/// Runs the scenario with no operator input.
pub fn run_scenario(scenario: &Scenario, hooks: &mut [&mut dyn TickHook]) -> Result<RunLog> {
    run_scenario_with(scenario, hooks, &mut NoCommands)
}

/// Runs ticks `0..round(duration / dt)`. Scripted operator commands are
/// delivered before those from `commands` within a tick.
pub fn run_scenario_with(
    scenario: &Scenario,
    hooks: &mut [&mut dyn TickHook],
    commands: &mut dyn CommandSource,
) -> Result<RunLog> {
    scenario.validate()?;
    let mut order: Vec<usize> = (0..hooks.len()).collect();
    order.sort_by_key(|&i| hooks[i].stage());

    let n_ticks = scenario.n_ticks();
    let header = RunHeader {
        run_id: scenario.run_id(),
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        dt: scenario.dt,
        n_ticks,
        ai_sources: scenario.ai_sources(),
        scenario_digest: scenario_digest(scenario),
    };

    let mut ego = scenario.ego;
    let mut objects: Vec<_> = scenario.objects.iter().map(|o| o.truth.clone()).collect();
    let mut mode = SystemMode::nominal(scenario.ai_sources());
    let mut scripted = scenario.operator_script.iter().peekable();
    let mut ticks = Vec::with_capacity(n_ticks as usize);
    let mut result = Ok(());

    for tick in 0..n_ticks {
        let time = scenario.time_of(tick);
        let truth = SceneState {
            tick,
            time,
            ego,
            objects: objects.clone(),
        };
        let cloud = scan_lidar(&truth, &scenario.lidar, &mut seed::stream(scenario.seed, "lidar", tick));
        let cloud = PointCloud { tick, ..cloud };
        let raster = rasterize_scene(&truth, &scenario.raster);

        let mut cmds = Vec::new();
        while let Some(c) = scripted.next_if(|c| c.time <= time + 1e-9) {
            cmds.push(c.command.clone());
        }
        cmds.extend(commands.drain(tick, time));

        let mut frame = TickFrame {
            seed: scenario.seed,
            dt: scenario.dt,
            tick,
            time,
            truth,
            cloud,
            raster,
            commands: cmds,
            mode_in: mode.clone(),
            source_lists: Vec::new(),
            fallback_list: None,
            zone: None,
            fm: None,
            am: None,
            mode: None,
            actions: None,
            fused: None,
            output: None,
            open_incidents: Vec::new(),
            alerts: Vec::new(),
        };

        for &i in &order {
            if let Err(message) = hooks[i].on_tick(&mut frame) {
                result = Err(CageError::Hook {
                    hook: hooks[i].name().to_string(),
                    tick,
                    message,
                });
                break;
            }
        }
        if result.is_err() {
            break;
        }

        let command = match frame.actions.as_ref().map(|a| a.speed) {
            Some(SpeedCommand::Brake { decel }) => EgoCommand {
                accel: -decel,
                steering: 0.0,
            },
            _ => scenario.script_command(&ego, time),
        };
        if let Some(m) = &frame.mode {
            mode = m.clone();
        }
        ticks.push(frame.to_record(false));

        ego = step_ego(&ego, command, scenario.dt, scenario.limits.max_steering);
        for (obj, script) in objects.iter_mut().zip(&scenario.objects) {
            let v = script.velocity_at(time);
            if v != crate::geometry::Point2::ORIGIN {
                obj.footprint = obj.footprint.map(|p| p + v * scenario.dt);
            }
            obj.velocity = v;
        }
    }

    let last = ticks.last().map(|t| t.tick);
    for h in hooks.iter_mut() {
        h.finish(last);
    }
    result?;
    Ok(RunLog { header, ticks })
}

/// Sources that produced at least one object in any fused output.
pub fn fused_contributors(log: &RunLog) -> BTreeSet<SourceId> {
    log.ticks
        .iter()
        .filter_map(|t| t.fused.as_ref())
        .flat_map(|f| f.objects.iter().flat_map(|o| o.contributors.iter().cloned()))
        .collect()
}
