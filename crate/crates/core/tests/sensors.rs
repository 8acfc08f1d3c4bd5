mod oracles;

use cage_core::geometry::{ConvexPolygon, Point2};
use cage_core::scene::{EgoState, ObjectClass, PhysicalClass, PoseTag, SceneState, TruthObject};
use cage_core::sim::kinematics::{step_ego, EgoCommand};
use cage_core::sim::lidar::{scan_lidar, LidarConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(rng: &mut impl Rng) -> SceneState {
    let ego = EgoState {
        position: Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        heading: rng.random_range(-3.1..3.1),
        ..EgoState::default()
    };
    let objects = (0..rng.random_range(1..6))
        .map(|i| {
            let range = rng.random_range(4.0..45.0);
            let bearing = rng.random_range(-3.1..3.1);
            let local = Point2::new(range * f64::cos(bearing), range * f64::sin(bearing));
            TruthObject {
                id: format!("o{i}"),
                visual_class: ObjectClass::Vehicle,
                physical_class: PhysicalClass::Vehicle,
                footprint: ConvexPolygon::oriented_rect(
                    ego.to_world(local),
                    rng.random_range(0.5..4.5),
                    rng.random_range(0.5..2.0),
                    rng.random_range(-3.1..3.1),
                )
                .unwrap(),
                pose_tag: PoseTag::None,
                velocity: Point2::ORIGIN,
            }
        })
        .collect();
    SceneState {
        tick: 0,
        time: 0.0,
        ego,
        objects,
    }
}

/// Nearest hit along the ray from the origin at `bearing`, solving the
/// ray-segment system directly by Cramer's rule.
fn oracle_range(polys: &[Vec<Point2>], bearing: f64) -> Option<f64> {
    let (dx, dy) = (bearing.cos(), bearing.sin());
    let mut best: Option<f64> = None;
    for poly in polys {
        for k in 0..poly.len() {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            // t·d = a + u·e  →  [dx −ex; dy −ey]·[t u]ᵀ = a
            let det = -dx * ey + ex * dy;
            if det.abs() < 1e-15 {
                continue;
            }
            let t = (-a.x * ey + ex * a.y) / det;
            let u = (dx * a.y - dy * a.x) / det;
            if t >= 0.0 && (0.0..=1.0).contains(&u) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
    }
    best
}

#[test]
fn noiseless_lidar_matches_ray_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(132);
    let cfg = LidarConfig {
        ray_count: 720,
        max_range: 50.0,
        range_noise_sigma: 0.0,
        fov: std::f64::consts::TAU,
    };
    for case in 0..50 {
        let scene = random_scene(&mut rng);
        let polys: Vec<Vec<Point2>> = scene
            .objects
            .iter()
            .map(|o| {
                o.footprint
                    .vertices()
                    .iter()
                    .map(|&p| oracles::to_local(p, scene.ego.position, scene.ego.heading))
                    .collect()
            })
            .collect();
        let expected: Vec<Point2> = (0..cfg.ray_count)
            .filter_map(|i| {
                let bearing = cfg.fov * (i as f64 / cfg.ray_count as f64 - 0.5);
                oracle_range(&polys, bearing)
                    .filter(|r| *r <= cfg.max_range)
                    .map(|r| Point2::new(r * bearing.cos(), r * bearing.sin()))
            })
            .collect();
        let cloud = scan_lidar(&scene, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(cloud.points.len(), expected.len(), "case {case}");
        for (p, q) in cloud.points.iter().zip(&expected) {
            assert!(p.position.distance(*q) < 1e-9, "case {case}: {:?} vs {q:?}", p.position);
        }
    }
}

#[test]
fn seeded_noisy_scans_are_bit_identical() {
    let scene = random_scene(&mut ChaCha8Rng::seed_from_u64(1));
    let cfg = LidarConfig::default();
    let a = scan_lidar(&scene, &cfg, &mut ChaCha8Rng::seed_from_u64(42));
    let b = scan_lidar(&scene, &cfg, &mut ChaCha8Rng::seed_from_u64(42));
    assert_eq!(a, b);
    assert!(!a.points.is_empty());
}

proptest! {
    /// With zero steering and acceleration, n steps of length dt move the car
    /// n·v·dt along its heading.
    #[test]
    fn straight_driving_is_exact_integration(
        v in 0.0f64..30.0,
        heading in -3.1f64..3.1,
        n in 1usize..200,
    ) {
        let dt = 0.05;
        let mut ego = EgoState { speed: v, heading, ..EgoState::default() };
        for _ in 0..n {
            ego = step_ego(&ego, EgoCommand::default(), dt, 0.6);
        }
        let d = v * dt * n as f64;
        prop_assert!((ego.position.x - d * heading.cos()).abs() < 1e-9);
        prop_assert!((ego.position.y - d * heading.sin()).abs() < 1e-9);
        prop_assert_eq!(ego.heading, heading);
    }

    /// Braking never makes the speed negative, and the speed after each step
    /// is `max(0, v + a·dt)`.
    #[test]
    fn braking_floors_at_zero(v in 0.0f64..30.0, decel in 1.0f64..10.0) {
        let mut ego = EgoState { speed: v, ..EgoState::default() };
        for _ in 0..1000 {
            let expected = (ego.speed - decel * 0.05).max(0.0);
            ego = step_ego(&ego, EgoCommand { accel: -decel, steering: 0.0 }, 0.05, 0.6);
            prop_assert_eq!(ego.speed, expected);
        }
        prop_assert_eq!(ego.speed, 0.0);
    }
}
