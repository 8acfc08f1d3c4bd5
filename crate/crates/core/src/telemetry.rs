//! Telemetry frames and the non-blocking hand-off to the control center.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::command::CommandAck;
use crate::monitor::anomaly::AmVerdict;
use crate::monitor::function::{FmVerdict, SafeZone};
use crate::reactor::SystemMode;
use crate::scene::{EgoState, ObjectList};
use crate::sim::runner::{Stage, TickFrame, TickHook};

pub const SCORE_HISTORY: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub run_id: String,
    pub tick: u64,
    pub time: f64,
    pub ego: EgoState,
    pub safe_zone: Option<SafeZone>,
    pub source_lists: Vec<ObjectList>,
    pub fused: Option<ObjectList>,
    pub fallback: Option<ObjectList>,
    pub fm: Option<FmVerdict>,
    pub am: Option<AmVerdict>,
    pub mode: SystemMode,
    pub active_incidents: Vec<u64>,
    /// Anomaly scores of the last ticks, oldest first.
    pub anomaly_history: Vec<f64>,
    pub command_acks: Vec<CommandAck>,
    pub alerts: Vec<String>,
}

/// Bounded FIFO that never blocks the producer: when full, the oldest item
/// is discarded.
#[derive(Debug)]
pub struct DropOldestQueue<T> {
    capacity: usize,
    inner: Mutex<(VecDeque<T>, bool)>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        DropOldestQueue {
            capacity,
            inner: Mutex::new((VecDeque::with_capacity(capacity), false)),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        }
    }

    pub fn push(&self, item: T) {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if g.0.len() == self.capacity {
            g.0.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        g.0.push_back(item);
        self.ready.notify_one();
    }

    pub fn try_pop(&self) -> Option<T> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).0.pop_front()
    }

    /// Waits up to `timeout` for an item. `None` on timeout or when closed
    /// and empty.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let (mut g, _) = self
            .ready
            .wait_timeout_while(g, timeout, |(q, closed)| q.is_empty() && !*closed)
            .unwrap_or_else(|e| e.into_inner());
        g.0.pop_front()
    }

    /// Marks the end of the stream; consumers drain what is left.
    pub fn close(&self) {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).1 = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).1
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// Builds one frame per tick and hands it to the queue, if any.
pub struct TelemetryStage {
    run_id: String,
    history: VecDeque<f64>,
    queue: Option<Arc<DropOldestQueue<TelemetryFrame>>>,
    /// Wall-clock time per tick when pacing a live run.
    pace: Option<Duration>,
    started: Option<Instant>,
    pub last: Option<TelemetryFrame>,
}

impl TelemetryStage {
    pub fn new(run_id: impl Into<String>, queue: Option<Arc<DropOldestQueue<TelemetryFrame>>>) -> Self {
        TelemetryStage {
            run_id: run_id.into(),
            history: VecDeque::with_capacity(SCORE_HISTORY),
            queue,
            pace: None,
            started: None,
            last: None,
        }
    }

    /// Holds each tick until `tick_period` of wall-clock time has passed
    /// since the run started, so a live operator sees real-time motion.
    pub fn paced(mut self, tick_period: Duration) -> Self {
        self.pace = Some(tick_period);
        self
    }

    pub fn build(&mut self, frame: &TickFrame) -> TelemetryFrame {
        if let Some(am) = &frame.am {
            if self.history.len() == SCORE_HISTORY {
                self.history.pop_front();
            }
            self.history.push_back(am.score);
        }
        TelemetryFrame {
            run_id: self.run_id.clone(),
            tick: frame.tick,
            time: frame.time,
            ego: frame.truth.ego,
            safe_zone: frame.zone.clone(),
            source_lists: frame.source_lists.clone(),
            fused: frame.fused.as_ref().map(|f| f.to_object_list()),
            fallback: frame.fallback_list.clone(),
            fm: frame.fm.clone(),
            am: frame.am.clone(),
            mode: frame.mode.clone().unwrap_or_else(|| frame.mode_in.clone()),
            active_incidents: frame.open_incidents.clone(),
            anomaly_history: self.history.iter().copied().collect(),
            command_acks: frame
                .actions
                .as_ref()
                .map(|a| a.command_acks.clone())
                .unwrap_or_default(),
            alerts: frame.alerts.clone(),
        }
    }
}

impl TickHook for TelemetryStage {
    fn name(&self) -> &str {
        "telemetry"
    }

    fn stage(&self) -> Stage {
        Stage::Telemetry
    }

    fn on_tick(&mut self, frame: &mut TickFrame) -> std::result::Result<(), String> {
        let t = self.build(frame);
        if let Some(q) = &self.queue {
            q.push(t.clone());
        }
        self.last = Some(t);
        if let Some(period) = self.pace {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + period * (frame.tick as u32 + 1);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        Ok(())
    }

    fn finish(&mut self, _last_tick: Option<u64>) {
        if let Some(q) = &self.queue {
            q.close();
        }
    }
}
