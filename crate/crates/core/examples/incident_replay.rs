//! Recording an incident to disk and replaying it.
//!
//! Runs the poster fixture with an output directory, reads the incident back
//! and re-executes every recorded tick through the monitors and the reactor.
//! A verdict edited after the fact is reported as a mismatch.
//!
//! `cargo run -p cage-core --example incident_replay --release`

use std::path::PathBuf;

use cage_core::pipeline::{incident_dir, run_cage, CageOptions};
use cage_core::recorder::read_incident_dir;
use cage_core::replay::replay_incident;
use cage_core::sim::runner::NoCommands;
use cage_core::sim::scenario::Scenario;

fn main() -> cage_core::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/poster.json");
    let scenario = Scenario::load(&path, None)?;
    let out = std::env::temp_dir().join(format!("cage-replay-{}", std::process::id()));
    let run = run_cage(
        &scenario,
        CageOptions {
            out_dir: Some(out.clone()),
            ..Default::default()
        },
        &mut NoCommands,
    )?;
    for p in &run.incident_paths {
        println!("wrote {}", p.display());
    }

    for inc in read_incident_dir(&incident_dir(&out, &scenario.run_id()))? {
        let report = replay_incident(&inc, None)?;
        println!(
            "incident at tick {}: {} ticks replayed, exact = {}",
            inc.header.first_trigger_tick,
            report.ticks,
            report.is_exact()
        );

        let mut tampered = inc.clone();
        if let Some(fm) = tampered.ticks.iter_mut().find_map(|t| t.fm.as_mut().filter(|f| f.flag)) {
            fm.flag = false;
        }
        let report = replay_incident(&tampered, None)?;
        for m in report.mismatches.iter().take(3) {
            println!("tampered copy: tick {} field {} differs", m.tick, m.field);
        }
    }
    std::fs::remove_dir_all(&out).ok();
    Ok(())
}
