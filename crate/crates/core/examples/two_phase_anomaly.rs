//! Anomaly-monitor retraining loop on the pedestrian fixtures.
//!
//! Builds a knowledge base from a standing-pedestrian drive, shows
//! that a lying pedestrian is flagged, retrains on the recorded incident and
//! shows that the same scene is no longer flagged.
//!
//! `cargo run -p cage-core --example two_phase_anomaly --release`

use std::path::PathBuf;

use cage_core::monitor::anomaly::TrainParams;
use cage_core::monitor::knowledge::{retrain_with_recordings, KnowledgeBase};
use cage_core::pipeline::{run_cage, CageOptions};
use cage_core::sim::runner::NoCommands;
use cage_core::sim::scenario::Scenario;

fn fixture(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    Scenario::load(&p, None).expect("fixture loads")
}

fn main() -> cage_core::Result<()> {
    let work = std::env::temp_dir().join(format!("cage-two-phase-{}", std::process::id()));
    let kb = KnowledgeBase::open(work.join("kb"))?;

    let lying = fixture("lying_pedestrian.json");
    // Same raster window as the scene that will be scored.
    let standing = Scenario {
        raster: lying.raster,
        ..fixture("standing_pedestrian.json")
    };
    let run = run_cage(&standing, CageOptions::default(), &mut NoCommands)?;
    let added = kb.add_rasters(run.log.ticks.iter().map(|t| &t.raster))?;
    println!("standing pedestrian: {added} new rasters");
    let t0 = std::time::Instant::now();
    let (v1, curve) = kb.train_next(&TrainParams::default(), 0.99)?;
    println!(
        "v1: tau {:.6}, loss {:.6} -> {:.6} ({:.1?})",
        v1.threshold,
        curve[0],
        curve[curve.len() - 1],
        t0.elapsed()
    );

    let phase1 = run_cage(
        &lying,
        CageOptions {
            model: Some(v1.clone()),
            ..Default::default()
        },
        &mut NoCommands,
    )?;
    let s1 = &phase1.summary;
    println!(
        "phase 1: am flags {}, first {:?}, max score {:?}, final {:?}, incidents {}",
        s1.am_flags, s1.first_am_flag, s1.max_anomaly_score, s1.final_mode, s1.incidents
    );

    let recorded: Vec<_> = phase1.incidents.iter().flat_map(|i| i.rasters()).collect();
    let v2 = retrain_with_recordings(&v1, &kb, &recorded)?;
    let phase2 = run_cage(
        &lying,
        CageOptions {
            model: Some(v2.clone()),
            ..Default::default()
        },
        &mut NoCommands,
    )?;
    let s2 = &phase2.summary;
    println!(
        "phase 2 (v{}): tau {:.6}, am flags {}, max score {:?}, final {:?}",
        v2.version, v2.threshold, s2.am_flags, s2.max_anomaly_score, s2.final_mode
    );
    if let Some(t) = s1.first_am_flag {
        let a = phase1.log.ticks[t as usize].am.as_ref().map(|a| a.flag);
        let b = phase2.log.ticks[t as usize].am.as_ref().map(|a| a.flag);
        println!("flag pair at tick {t}: {a:?} -> {b:?}");
    }
    std::fs::remove_dir_all(&work).ok();
    Ok(())
}
