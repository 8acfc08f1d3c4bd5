//! Clear and focus zones for a range of speeds and steering angles.
//!
//! `cargo run -p cage-core --example safe_zone`

use cage_core::monitor::function::{compute_safe_zone, stopping_distance, SafeZoneParams};
use cage_core::scene::EgoState;

fn main() {
    let params = SafeZoneParams::default();
    println!("speed  steer  stop [m]  clear [m²]  focus [m²]  vertices");
    for speed in [0.0, 5.0, 10.0, 20.0] {
        for steering in [0.0, 0.1, -0.3] {
            let ego = EgoState {
                speed,
                steering_angle: steering,
                ..EgoState::default()
            };
            let z = compute_safe_zone(&ego, &params);
            println!(
                "{speed:>5.1} {steering:>6.2} {:>9.2} {:>11.2} {:>11.2}  {}/{}",
                stopping_distance(speed, &params),
                z.clear_zone.area(),
                z.focus_zone.area(),
                z.clear_zone.vertices.len(),
                z.focus_zone.vertices.len()
            );
        }
    }
}
