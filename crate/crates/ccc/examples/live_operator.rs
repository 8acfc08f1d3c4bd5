//! A served run with a scripted remote operator.
//!
//! Starts the control center on an ephemeral port, drives the benign fixture
//! at real-time pace and connects a websocket client that issues an
//! emergency stop, tries to resume before the handover, acknowledges the
//! handover and resumes. Every ack and mode change is printed.
//!
//! `cargo run -p cage-ccc --example live_operator --release`

use std::path::PathBuf;
use std::sync::Arc;

use cage_ccc::protocol::{Envelope, MessageType};
use cage_ccc::{CccConfig, CccService};
use cage_core::command::{CommandKind, OperatorCommand};
use cage_core::pipeline::{run_cage, CageOptions};
use cage_core::reactor::ModeState;
use cage_core::sim::scenario::Scenario;
use cage_core::telemetry::{DropOldestQueue, TelemetryFrame};
use futures::{SinkExt, StreamExt};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/benign.json");
    let scenario = Scenario::load(&path, None)?;
    let cfg = CccConfig {
        port: 0,
        ..CccConfig::default()
    };
    let (service, mut commands) = CccService::start(&cfg, &scenario.run_id())?;
    let addr = service.addr();
    let queue = Arc::new(DropOldestQueue::<TelemetryFrame>::new(8));
    let pump = service.hub.pump(queue.clone());
    let vehicle = std::thread::spawn(move || {
        let options = CageOptions {
            telemetry: Some(queue),
            realtime: Some(1.0),
            ..Default::default()
        };
        run_cage(&scenario, options, &mut commands)
    });

    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    runtime.block_on(async move {
        let (mut ws, _) = connect_async(format!("ws://{addr}/ws?token={}", cfg.token)).await?;
        let script = [
            (20, CommandKind::EmergencyStop),
            (30, CommandKind::Resume),
            (40, CommandKind::AckHandover),
            (50, CommandKind::Resume),
        ];
        let mut next = 0;
        let mut last_mode = None;
        while let Some(msg) = ws.next().await {
            let Message::Text(text) = msg? else { continue };
            let env: Envelope = serde_json::from_str(text.as_str())?;
            match env.kind {
                MessageType::Hello => println!("hello: {}", env.payload),
                MessageType::Ack => println!("tick {:>3}  admission ack {}", env.tick, env.payload),
                MessageType::Telemetry => {
                    let frame: TelemetryFrame = serde_json::from_value(env.payload)?;
                    for ack in &frame.command_acks {
                        println!("tick {:>3}  reactor ack   {}", frame.tick, serde_json::to_string(ack)?);
                    }
                    if last_mode != Some(frame.mode.state) {
                        println!(
                            "tick {:>3}  mode {:?}, speed {:.2}",
                            frame.tick, frame.mode.state, frame.ego.speed
                        );
                        last_mode = Some(frame.mode.state);
                    }
                    if let Some((at, kind)) = script.get(next).filter(|(at, _)| frame.tick >= *at) {
                        let cmd = OperatorCommand::new(format!("op-{next}"), kind.clone());
                        println!("tick {:>3}  send {:?} (scheduled for {at})", frame.tick, cmd.kind);
                        ws.send(Message::Text(
                            Envelope::command(next as u64, frame.tick, &cmd).to_line().into(),
                        ))
                        .await?;
                        next += 1;
                    }
                    if next == script.len() && last_mode == Some(ModeState::Nominal) && frame.tick > 60 {
                        break;
                    }
                }
                MessageType::Command => {}
            }
        }
        ws.close(None).await.ok();
        Ok::<_, Box<dyn std::error::Error>>(())
    })?;

    let run = vehicle.join().expect("vehicle thread")?;
    pump.join().ok();
    service.shutdown()?;
    println!(
        "run finished: {:?}, {} commands accepted",
        run.summary.final_mode, run.summary.commands_accepted
    );
    Ok(())
}
