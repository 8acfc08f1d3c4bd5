//! Fan-out of telemetry to connected clients and fan-in of commands to the
//! vehicle. Clients always get the newest frame; frames in between are
//! skipped, never reordered.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::watch;

use cage_core::command::{CommandAck, OperatorCommand};
use cage_core::telemetry::{DropOldestQueue, TelemetryFrame};

use crate::gate::CommandGate;
use crate::protocol::{parse_inbound, Inbound};
use crate::CccError;

/// Bytes an envelope adds around its payload, with room for 20-digit numbers.
const ENVELOPE_OVERHEAD: usize = 96;

/// A frame serialized once and shared by all connections.
#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub tick: u64,
    pub payload: Arc<str>,
}

/// The telemetry envelope line for `payload`, built without re-serializing.
pub fn telemetry_line(seq: u64, p: &Published) -> String {
    format!(
        r#"{{"type":"telemetry","seq":{seq},"tick":{},"payload":{}}}"#,
        p.tick, p.payload
    )
}

#[derive(Debug)]
pub struct Hub {
    frames: watch::Sender<Option<Published>>,
    gate: Mutex<CommandGate>,
    commands: Mutex<Option<mpsc::Sender<OperatorCommand>>>,
    run_id: Mutex<Option<String>>,
    max_message_bytes: usize,
    oversize: AtomicU64,
}

impl Hub {
    pub fn new(max_message_bytes: usize) -> (Arc<Hub>, mpsc::Receiver<OperatorCommand>) {
        let (tx, rx) = mpsc::channel();
        let hub = Hub {
            frames: watch::Sender::new(None),
            gate: Mutex::new(CommandGate::new()),
            commands: Mutex::new(Some(tx)),
            run_id: Mutex::new(None),
            max_message_bytes,
            oversize: AtomicU64::new(0),
        };
        (Arc::new(hub), rx)
    }

    pub fn set_run_id(&self, run_id: impl Into<String>) {
        *self.run_id.lock().unwrap_or_else(|e| e.into_inner()) = Some(run_id.into());
    }

    pub fn run_id(&self) -> Option<String> {
        self.run_id.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn max_message_bytes(&self) -> usize {
        self.max_message_bytes
    }

    /// Frames refused for exceeding the message size limit.
    pub fn oversize_count(&self) -> u64 {
        self.oversize.load(Ordering::Relaxed)
    }

    /// Replaces the current frame. Never blocks on clients.
    pub fn publish(&self, frame: &TelemetryFrame) -> Result<(), CccError> {
        let payload = serde_json::to_string(frame).expect("telemetry serializes");
        let bytes = payload.len() + ENVELOPE_OVERHEAD;
        if bytes > self.max_message_bytes {
            self.oversize.fetch_add(1, Ordering::Relaxed);
            return Err(CccError::Oversize {
                tick: frame.tick,
                bytes,
                max: self.max_message_bytes,
            });
        }
        self.gate.lock().unwrap_or_else(|e| e.into_inner()).observe(frame);
        self.frames.send_replace(Some(Published {
            tick: frame.tick,
            payload: payload.into(),
        }));
        Ok(())
    }

    pub fn subscribe(&self) -> watch::Receiver<Option<Published>> {
        self.frames.subscribe()
    }

    pub fn latest_tick(&self) -> u64 {
        self.frames.borrow().as_ref().map_or(0, |p| p.tick)
    }

    /// Admits a command and forwards it to the vehicle queue.
    pub fn submit(&self, cmd: OperatorCommand) -> CommandAck {
        let ack = self.gate.lock().unwrap_or_else(|e| e.into_inner()).admit(&cmd);
        if !ack.is_accepted() {
            return ack;
        }
        let sender = self.commands.lock().unwrap_or_else(|e| e.into_inner());
        match sender.as_ref().map(|s| s.send(cmd)) {
            Some(Ok(())) => ack,
            _ => CommandAck::rejected(ack.command_id, "vehicle run has ended"),
        }
    }

    /// Parses one inbound text frame and answers it.
    pub fn handle_text(&self, text: &str) -> CommandAck {
        match parse_inbound(text) {
            Inbound::Command(c) => self.submit(c),
            Inbound::Malformed { command_id, reason } => CommandAck::rejected(command_id, reason),
        }
    }

    /// Stops accepting commands; later submissions are rejected.
    pub fn close_commands(&self) {
        self.commands.lock().unwrap_or_else(|e| e.into_inner()).take();
    }

    /// Moves frames from the vehicle-side queue into the hub until the queue
    /// is closed and drained.
    pub fn pump(self: &Arc<Self>, queue: Arc<DropOldestQueue<TelemetryFrame>>) -> std::thread::JoinHandle<()> {
        let hub = self.clone();
        std::thread::spawn(move || loop {
            match queue.pop_timeout(Duration::from_millis(100)) {
                Some(f) => {
                    if let Err(e) = hub.publish(&f) {
                        log::warn!("{e}");
                    }
                }
                None if queue.is_closed() && queue.is_empty() => break,
                None => {}
            }
        })
    }
}
