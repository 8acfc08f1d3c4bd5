//! Scenario documents: the initial world, scripts for the ego vehicle, the
//! objects, injected faults and operator commands, plus the configuration of
//! every pipeline component.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::command::OperatorCommand;
use crate::error::{CageError, Result};
use crate::fallback::FallbackConfig;
use crate::geometry::Point2;
use crate::monitor::function::{HaraThresholds, SafeZoneParams};
use crate::perception::{PerceptionModelConfig, TimedFault};
use crate::raster::RasterWindow;
use crate::record;
use crate::recorder::RecorderConfig;
use crate::scene::{EgoState, SourceId, TruthObject, DEFAULT_MAX_STEERING};
use crate::sim::kinematics::EgoCommand;
use crate::sim::lidar::LidarConfig;

/// From `time` on, drive towards `target_speed` with this steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoWaypoint {
    pub time: f64,
    pub target_speed: f64,
    #[serde(default)]
    pub steering_angle: f64,
}

/// From `time` on, the object moves with `velocity` (world frame, m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionKey {
    pub time: f64,
    pub velocity: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObject {
    #[serde(flatten)]
    pub truth: TruthObject,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub motion: Vec<MotionKey>,
}

impl ScriptedObject {
    /// Velocity in effect at time `t`.
    pub fn velocity_at(&self, t: f64) -> Point2 {
        self.motion
            .iter()
            .take_while(|k| k.time <= t)
            .last()
            .map(|k| k.velocity)
            .unwrap_or(self.truth.velocity)
    }
}

/// A fault directive aimed at one perception path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFault {
    pub source: SourceId,
    #[serde(flatten)]
    pub fault: TimedFault,
}

/// An operator command injected at a fixed time, for reproducible runs
/// without a live control center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub time: f64,
    #[serde(flatten)]
    pub command: OperatorCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleLimits {
    pub max_steering: f64,
    /// Largest acceleration the script controller may command.
    pub max_accel: f64,
    /// Largest deceleration the script controller may command.
    pub max_decel: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        VehicleLimits {
            max_steering: DEFAULT_MAX_STEERING,
            max_accel: 3.0,
            max_decel: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FunctionMonitorConfig {
    pub safe_zone: SafeZoneParams,
    pub thresholds: HaraThresholds,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyMonitorConfig {
    /// Model file, relative to the scenario file. The command line may
    /// override it.
    pub model: Option<PathBuf>,
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub ego: EgoState,
    #[serde(default)]
    pub ego_script: Vec<EgoWaypoint>,
    #[serde(default)]
    pub objects: Vec<ScriptedObject>,
    #[serde(default)]
    pub fault_script: Vec<ScriptedFault>,
    #[serde(default)]
    pub operator_script: Vec<ScriptedCommand>,
    #[serde(default)]
    pub perception_models: Vec<PerceptionModelConfig>,
    #[serde(default)]
    pub limits: VehicleLimits,
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default)]
    pub raster: RasterWindow,
    #[serde(default)]
    pub fallback_perception: FallbackConfig,
    #[serde(default)]
    pub function_monitor: FunctionMonitorConfig,
    #[serde(default)]
    pub anomaly_monitor: AnomalyMonitorConfig,
    #[serde(default)]
    pub recorder: RecorderConfig,
}

impl Scenario {
    /// Reads and validates a scenario, applying an optional overlay document
    /// first (objects merge key by key, everything else is replaced).
    pub fn load(path: &Path, overlay: Option<&Path>) -> Result<Scenario> {
        let text = fs::read_to_string(path).map_err(|e| CageError::io(path, e))?;
        let mut scenario: Scenario = match overlay {
            None => record::parse_document(path, &text)?,
            Some(o) => {
                let mut base: Value = record::parse_document(path, &text)?;
                let otext = fs::read_to_string(o).map_err(|e| CageError::io(o, e))?;
                let patch: Value = record::parse_document(o, &otext)?;
                merge(&mut base, patch);
                serde_json::from_value(base).map_err(|e| CageError::Parse {
                    path: format!("{} + {}", path.display(), o.display()),
                    line: 0,
                    message: e.to_string(),
                })?
            }
        };
        if let Some(m) = &scenario.anomaly_monitor.model {
            if m.is_relative() {
                if let Some(dir) = path.parent() {
                    scenario.anomaly_monitor.model = Some(dir.join(m));
                }
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = record::parse_document(Path::new("<scenario>"), text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn n_ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 * self.dt
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.name, self.seed)
    }

    pub fn ai_sources(&self) -> Vec<SourceId> {
        self.perception_models.iter().map(|m| m.id.clone()).collect()
    }

    /// Model configs with the fault script folded into their error processes.
    pub fn effective_models(&self) -> Vec<PerceptionModelConfig> {
        self.perception_models
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.error_process.extend(
                    self.fault_script
                        .iter()
                        .filter(|f| f.source == m.id)
                        .map(|f| f.fault.clone()),
                );
                m
            })
            .collect()
    }

    /// The script controller: steering from the active waypoint, and the
    /// acceleration that reaches its target speed this step, within limits.
    pub fn script_command(&self, ego: &EgoState, t: f64) -> EgoCommand {
        let wp = self.ego_script.iter().take_while(|w| w.time <= t).last();
        match wp {
            None => EgoCommand {
                accel: 0.0,
                steering: ego.steering_angle,
            },
            Some(w) => EgoCommand {
                accel: ((w.target_speed - ego.speed) / self.dt).clamp(-self.limits.max_decel, self.limits.max_accel),
                steering: w.steering_angle,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |what: &str, reason: String| Err(CageError::invalid(what, reason));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return invalid("name", "must be non-empty and contain no path separators".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid("duration", format!("must be > 0, got {}", self.duration));
        }
        let l = &self.limits;
        if !(l.max_steering > 0.0 && l.max_accel > 0.0 && l.max_decel > 0.0) {
            return invalid("limits", "all limits must be > 0".into());
        }
        self.ego.validate(l.max_steering)?;
        sorted("ego_script", self.ego_script.iter().map(|w| w.time))?;
        for (i, w) in self.ego_script.iter().enumerate() {
            if !(w.target_speed >= 0.0) || w.steering_angle.abs() > l.max_steering {
                return invalid(
                    &format!("ego_script[{i}]"),
                    "target_speed must be >= 0 and |steering_angle| <= max_steering".into(),
                );
            }
        }
        let mut ids = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            o.truth.validate()?;
            if !ids.insert(o.truth.id.as_str()) {
                return invalid(&format!("objects[{i}]"), format!("duplicate id {}", o.truth.id));
            }
            sorted(&format!("objects[{i}].motion"), o.motion.iter().map(|k| k.time))?;
        }
        let mut sources = BTreeSet::new();
        for m in &self.perception_models {
            m.validate()?;
            sorted(
                &format!("perception model {} error_process", m.id),
                m.error_process.iter().map(|f| f.start),
            )?;
            if !sources.insert(&m.id) {
                return invalid("perception_models", format!("duplicate id {}", m.id));
            }
        }
        sorted("fault_script", self.fault_script.iter().map(|f| f.fault.start))?;
        for (i, f) in self.fault_script.iter().enumerate() {
            if !sources.contains(&f.source) {
                return invalid(&format!("fault_script[{i}]"), format!("unknown source {}", f.source));
            }
        }
        sorted("operator_script", self.operator_script.iter().map(|c| c.time))?;
        let mut cmd_ids = BTreeSet::new();
        for c in &self.operator_script {
            if !cmd_ids.insert(c.command.command_id.as_str()) {
                return invalid(
                    "operator_script",
                    format!("duplicate command_id {}", c.command.command_id),
                );
            }
        }
        self.lidar.validate()?;
        self.raster.validate()?;
        self.fallback_perception.validate()?;
        self.function_monitor.safe_zone.validate()?;
        self.function_monitor.thresholds.validate()?;
        self.recorder.validate()?;
        Ok(())
    }
}

fn sorted(what: &str, times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        if !t.is_finite() || t < prev {
            return Err(CageError::invalid(
                format!("{what}[{i}]"),
                "times must be finite and sorted",
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Recursive object merge; non-object values in `patch` replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
