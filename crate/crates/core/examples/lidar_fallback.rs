//! The deterministic fallback path on a single lidar scan.
//!
//! Scans one tick of the benign fixture, clusters the returns, fits a
//! rectangle or cylinder to every cluster and classifies it with the default
//! shape rules. A car seen only from behind returns a single face, which
//! fails the vehicle extent rule and is reported as a static obstacle.
//!
//! `cargo run -p cage-core --example lidar_fallback --release`

use std::path::PathBuf;

use cage_core::fallback::{classify_shape, cluster_cloud, fit_shape};
use cage_core::geometry::Point2;
use cage_core::pipeline::{run_cage, CageOptions};
use cage_core::sim::lidar::scan_lidar;
use cage_core::sim::runner::NoCommands;
use cage_core::sim::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cage_core::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/benign.json");
    let scenario = Scenario::load(&path, None)?;
    let run = run_cage(&scenario, CageOptions::default(), &mut NoCommands)?;
    let truth = &run.log.ticks[20].truth;

    let cloud = scan_lidar(truth, &scenario.lidar, &mut ChaCha8Rng::seed_from_u64(1));
    let params = scenario.fallback_perception.cluster;
    let clusters = cluster_cloud(&cloud, &params);
    println!(
        "{} returns, {} clusters ({:?})",
        cloud.points.len(),
        clusters.len(),
        params
    );

    let rules = &scenario.fallback_perception.rules;
    for (i, members) in clusters.iter().enumerate() {
        let pts: Vec<Point2> = members.iter().map(|&k| cloud.points[k].position).collect();
        let fit = fit_shape(&pts)?;
        let det = classify_shape(&fit, rules);
        println!(
            "cluster {i}: {:>3} pts, {:?} {:.2} x {:.2} m, residual {:.3} -> {:?} at ({:.1}, {:.1})",
            pts.len(),
            fit.shape,
            fit.rect.length,
            fit.rect.width,
            fit.residual,
            det.object_class,
            det.center.x,
            det.center.y
        );
    }
    for o in &truth.objects {
        let c = (o.footprint.centroid() - truth.ego.position).rotate(-truth.ego.heading);
        println!("truth {}: {:?} at ({:.1}, {:.1})", o.id, o.physical_class, c.x, c.y);
    }
    Ok(())
}
