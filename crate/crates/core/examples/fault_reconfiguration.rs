//! Source exclusion with three redundant perception paths.
//!
//! From t = 2 s the wide camera labels the lead vehicle a pedestrian. The two
//! other sources outvote it, it is excluded, and the cage continues in
//! DegradedPrimary on the remaining pair.
//!
//! `cargo run -p cage-core --example fault_reconfiguration --release`

use std::path::PathBuf;

use cage_core::pipeline::{run_cage, CageOptions};
use cage_core::sim::runner::NoCommands;
use cage_core::sim::scenario::Scenario;

fn main() -> cage_core::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_source_fault.json");
    let scenario = Scenario::load(&path, None)?;
    let run = run_cage(&scenario, CageOptions::default(), &mut NoCommands)?;

    let mut last = None;
    for t in &run.log.ticks {
        let mode = t.mode_out();
        let key = (mode.state, mode.excluded_sources.clone());
        if last.as_ref() != Some(&key) {
            let classes: Vec<String> = t
                .source_lists
                .iter()
                .map(|l| {
                    let c: Vec<String> = l.objects.iter().map(|o| format!("{:?}", o.object_class)).collect();
                    format!("{}=[{}]", l.source, c.join(","))
                })
                .collect();
            println!(
                "tick {:>3}: {:?}, excluded {:?}, sources {}",
                t.tick,
                mode.state,
                mode.excluded_sources,
                classes.join(" ")
            );
            last = Some(key);
        }
    }
    let last = run.log.ticks.last().expect("non-empty run");
    let fused = last.fused.as_ref().expect("fused list");
    for o in &fused.objects {
        println!(
            "final fused: {:?} at ({:.1}, {:.1}) from {:?}",
            o.object.object_class, o.object.center.x, o.object.center.y, o.contributors
        );
    }
    Ok(())
}
