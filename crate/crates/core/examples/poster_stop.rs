//! Function monitor on the poster fixture.
//!
//! A camera reports a pedestrian printed on a roadside poster; the lidar sees
//! only a flat board. The detections disagree inside the focus zone, the
//! monitor flags, and the reactor brakes to a standstill.
//!
//! `cargo run -p cage-core --example poster_stop --release`

use std::path::PathBuf;

use cage_core::pipeline::{run_cage, CageOptions};
use cage_core::sim::runner::NoCommands;
use cage_core::sim::scenario::Scenario;

fn main() -> cage_core::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/poster.json");
    let scenario = Scenario::load(&path, None)?;
    let run = run_cage(&scenario, CageOptions::default(), &mut NoCommands)?;
    let flag = run.summary.first_fm_flag.expect("the poster is flagged");

    println!("tick   x [m]  speed   mode             fm  implicated");
    for t in &run.log.ticks[flag.saturating_sub(3) as usize..] {
        let fm = t.fm.as_ref();
        let implicated: Vec<&str> = fm
            .map(|f| f.implicated_sources.iter().map(|s| s.as_str()).collect())
            .unwrap_or_default();
        println!(
            "{:>4} {:>7.2} {:>6.2}   {:<16} {:<3} {}",
            t.tick,
            t.truth.ego.position.x,
            t.truth.ego.speed,
            format!("{:?}", t.mode_out().state),
            if fm.is_some_and(|f| f.flag) { "x" } else { "" },
            implicated.join(",")
        );
        if t.tick > flag + 4 {
            break;
        }
    }
    let stop = run
        .log
        .ticks
        .iter()
        .find(|t| t.tick > flag && t.truth.ego.speed == 0.0)
        .expect("ego stops");
    println!(
        "...\nstandstill at tick {} (x = {:.2} m), {} ticks after the flag",
        stop.tick,
        stop.truth.ego.position.x,
        stop.tick - flag
    );
    println!(
        "final mode {:?}, incidents {}",
        run.summary.final_mode, run.summary.incidents
    );
    Ok(())
}
