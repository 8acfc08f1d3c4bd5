//! Triggered data recording.
//!
//! A ring buffer keeps the last `pre_trigger_window` of ticks. A trigger opens
//! an incident holding that history, the trigger tick and
//! `post_trigger_window` of following ticks. Triggers arriving while an
//! incident is open extend it; a later incident never re-covers ticks an
//! earlier one already holds.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::monitor::function::{HaraThresholds, SafeZoneParams};
use crate::raster::{RasterWindow, SceneRaster};
use crate::reactor::{ReactorConfig, RecordTrigger};
use crate::record;
use crate::sim::runner::{Stage, TickFrame, TickHook, TickRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecorderConfig {
    pub pre_trigger_window: f64,
    pub post_trigger_window: f64,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        RecorderConfig {
            pre_trigger_window: 3.0,
            post_trigger_window: 2.0,
        }
    }
}

impl RecorderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pre_trigger_window > 0.0 && self.post_trigger_window > 0.0) {
            return Err(CageError::invalid("recorder", "windows must be > 0"));
        }
        Ok(())
    }

    pub fn pre_ticks(&self, dt: f64) -> u64 {
        (self.pre_trigger_window / dt).round() as u64
    }

    pub fn post_ticks(&self, dt: f64) -> u64 {
        (self.post_trigger_window / dt).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub version: u32,
    pub digest: String,
}

/// Settings needed to re-run the monitors over recorded ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentContext {
    pub run_id: String,
    pub seed: u64,
    pub dt: f64,
    pub safe_zone: SafeZoneParams,
    pub thresholds: HaraThresholds,
    pub reactor: ReactorConfig,
    pub raster: RasterWindow,
    pub model: Option<ModelRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentHeader {
    pub first_trigger_tick: u64,
    pub start_tick: u64,
    pub end_tick: u64,
    pub triggers: Vec<RecordTrigger>,
    /// The run ended before the post-trigger window was complete.
    pub truncated: bool,
    pub context: IncidentContext,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incident {
    pub header: IncidentHeader,
    pub ticks: Vec<TickRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum IncidentLine {
    Incident(Box<IncidentHeader>),
    Tick(Box<TickRecord>),
}

impl Incident {
    pub fn file_name(&self) -> String {
        format!("{}.inc", self.header.first_trigger_tick)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = record::encode(&IncidentLine::Incident(Box::new(self.header.clone())));
        out.push('\n');
        for t in &self.ticks {
            out.push_str(&record::encode(&IncidentLine::Tick(Box::new(t.clone()))));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| CageError::io(dir, e))?;
        let path = dir.join(self.file_name());
        record::write_atomic(&path, self.to_jsonl().as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Incident> {
        let mut header = None;
        let mut ticks = Vec::new();
        for (n, line) in record::read_raw_lines(path)? {
            match record::decode_at(path, n, &line)? {
                IncidentLine::Incident(h) => header = Some(*h),
                IncidentLine::Tick(t) => ticks.push(*t),
            }
        }
        let header = header.ok_or_else(|| CageError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "missing incident header".into(),
        })?;
        Ok(Incident { header, ticks })
    }

    /// The recorded raster sequence, ready for knowledge-base ingestion.
    pub fn rasters(&self) -> Vec<SceneRaster> {
        self.ticks.iter().map(|t| t.raster.clone()).collect()
    }

    pub fn covers(&self, tick: u64) -> bool {
        (self.header.start_tick..=self.header.end_tick).contains(&tick)
    }
}

/// Reads every `*.inc` file in `dir`, ordered by first trigger tick.
pub fn read_incident_dir(dir: &Path) -> Result<Vec<Incident>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CageError::io(dir, e))?;
    for e in entries {
        let path = e.map_err(|e| CageError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "inc") {
            out.push(Incident::read(&path)?);
        }
    }
    out.sort_by_key(|i| i.header.first_trigger_tick);
    Ok(out)
}

#[derive(Debug)]
struct OpenIncident {
    first_trigger_tick: u64,
    start_tick: u64,
    end_tick: u64,
    triggers: Vec<RecordTrigger>,
    ticks: Vec<TickRecord>,
}

#[derive(Debug)]
pub struct Recorder {
    config: RecorderConfig,
    context: IncidentContext,
    pre_ticks: u64,
    post_ticks: u64,
    dir: Option<PathBuf>,
    ring: VecDeque<TickRecord>,
    open: Option<OpenIncident>,
    last_end: Option<u64>,
    /// Closed incidents, in order.
    pub incidents: Vec<Incident>,
    pub written: Vec<PathBuf>,
}

impl Recorder {
    /// `dir` is the incident directory for this run; `None` keeps incidents
    /// in memory only.
    pub fn new(config: RecorderConfig, context: IncidentContext, dir: Option<PathBuf>) -> Self {
        let pre_ticks = config.pre_ticks(context.dt);
        let post_ticks = config.post_ticks(context.dt);
        Recorder {
            config,
            context,
            pre_ticks,
            post_ticks,
            dir,
            ring: VecDeque::with_capacity(pre_ticks as usize + 1),
            open: None,
            last_end: None,
            incidents: Vec::new(),
            written: Vec::new(),
        }
    }

    pub fn config(&self) -> &RecorderConfig {
        &self.config
    }

    /// Feeds one tick. Returns alerts for storage failures.
    pub fn push(&mut self, record: TickRecord, triggers: &[RecordTrigger]) -> Vec<String> {
        let tick = record.tick;
        let mut alerts = Vec::new();
        match &mut self.open {
            Some(open) => {
                open.ticks.push(record.clone());
                if !triggers.is_empty() {
                    open.end_tick = open.end_tick.max(tick + self.post_ticks);
                    open.triggers.extend_from_slice(triggers);
                }
            }
            None if !triggers.is_empty() => {
                let floor = self.last_end.map_or(0, |e| e + 1);
                let start = tick.saturating_sub(self.pre_ticks).max(floor);
                let mut ticks: Vec<TickRecord> = self.ring.iter().filter(|r| r.tick >= start).cloned().collect();
                ticks.push(record.clone());
                self.open = Some(OpenIncident {
                    first_trigger_tick: tick,
                    start_tick: ticks[0].tick,
                    end_tick: tick + self.post_ticks,
                    triggers: triggers.to_vec(),
                    ticks,
                });
            }
            None => {}
        }
        if self.ring.len() as u64 >= self.pre_ticks {
            self.ring.pop_front();
        }
        if self.pre_ticks > 0 {
            self.ring.push_back(record);
        }
        if self.open.as_ref().is_some_and(|o| tick >= o.end_tick) {
            alerts.extend(self.close(false));
        }
        alerts
    }

    /// First-trigger tick of the incident still collecting, if any.
    pub fn open_incident(&self) -> Option<u64> {
        self.open.as_ref().map(|o| o.first_trigger_tick)
    }

    /// Closes any open incident at run end.
    pub fn flush(&mut self) -> Vec<String> {
        if self.open.is_some() {
            self.close(true)
        } else {
            Vec::new()
        }
    }

    fn close(&mut self, truncated: bool) -> Vec<String> {
        let Some(open) = self.open.take() else {
            return Vec::new();
        };
        let end_tick = open.ticks.last().map_or(open.end_tick, |t| t.tick);
        self.last_end = Some(end_tick);
        let incident = Incident {
            header: IncidentHeader {
                first_trigger_tick: open.first_trigger_tick,
                start_tick: open.start_tick,
                end_tick,
                triggers: open.triggers,
                truncated,
                context: self.context.clone(),
            },
            ticks: open.ticks,
        };
        let mut alerts = Vec::new();
        if let Some(dir) = &self.dir {
            match incident.write(dir) {
                Ok(path) => self.written.push(path),
                Err(e) => {
                    log::warn!("incident {} not stored: {e}", incident.header.first_trigger_tick);
                    alerts.push(format!(
                        "recorder: incident {} not stored: {e}",
                        incident.header.first_trigger_tick
                    ));
                }
            }
        }
        self.incidents.push(incident);
        alerts
    }
}

/// Records every tick, with point clouds, and acts on the reactor's triggers.
pub struct RecorderStage {
    pub recorder: Recorder,
}

impl TickHook for RecorderStage {
    fn name(&self) -> &str {
        "recorder"
    }

    fn stage(&self) -> Stage {
        Stage::Recorder
    }

    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String> {
        let triggers = frame
            .actions
            .as_ref()
            .map(|a| a.record_triggers.clone())
            .unwrap_or_default();
        let alerts = self.recorder.push(frame.to_record(true), &triggers);
        frame.alerts.extend(alerts);
        frame.open_incidents = self.recorder.open_incident().into_iter().collect();
        Ok(())
    }

    fn finish(&mut self, _last_tick: Option<u64>) {
        for a in self.recorder.flush() {
            log::warn!("{a}");
        }
    }
}
