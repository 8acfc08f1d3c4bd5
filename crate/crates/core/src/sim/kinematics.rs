use serde::{Deserialize, Serialize};

use crate::scene::EgoState;

/// Longitudinal acceleration and front-wheel steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoCommand {
    pub accel: f64,
    pub steering: f64,
}

/// One explicit-Euler step of the kinematic bicycle model about the rear axle.
///
/// All updates use the pre-step state; the commanded steering is clamped to
/// `±max_steering` first and speed never goes negative.
pub fn step_ego(ego: &EgoState, command: EgoCommand, dt: f64, max_steering: f64) -> EgoState {
    debug_assert!(dt > 0.0);
    let steering = command.steering.clamp(-max_steering, max_steering);
    let v = ego.speed;
    let theta = ego.heading;
    let mut next = *ego;
    next.position.x += v * theta.cos() * dt;
    next.position.y += v * theta.sin() * dt;
    next.heading = theta + (v / ego.wheelbase) * steering.tan() * dt;
    next.speed = (v + command.accel * dt).max(0.0);
    next.steering_angle = steering;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn ego(speed: f64, heading: f64) -> EgoState {
        EgoState {
            speed,
            heading,
            wheelbase: 2.7,
            ..EgoState::default()
        }
    }

    #[test]
    fn straight_line() {
        let next = step_ego(&ego(1.0, 0.0), EgoCommand::default(), 1.0, 0.6);
        assert_eq!(next.position, Point2::new(1.0, 0.0));
        assert_eq!(next.heading, 0.0);
        assert_eq!(next.speed, 1.0);
    }

    #[test]
    fn at_rest_nothing_moves() {
        for delta in [-0.6, 0.0, 0.3] {
            let e = ego(0.0, 0.4);
            let next = step_ego(
                &e,
                EgoCommand {
                    accel: 0.0,
                    steering: delta,
                },
                0.05,
                0.6,
            );
            assert_eq!(next.position, e.position);
            assert_eq!(next.heading, e.heading);
            assert_eq!(next.speed, 0.0);
        }
    }

    #[test]
    fn yaw_rate_update() {
        // 5 / 2.7 · tan(0.1) · 0.05 = 0.0092903...
        let next = step_ego(
            &ego(5.0, 0.0),
            EgoCommand {
                accel: 0.0,
                steering: 0.1,
            },
            0.05,
            0.6,
        );
        assert!((next.heading - 0.009290).abs() < 5e-7, "{}", next.heading);
    }

    #[test]
    fn speed_floor_and_steering_clamp() {
        let next = step_ego(
            &ego(0.1, 0.0),
            EgoCommand {
                accel: -10.0,
                steering: 2.0,
            },
            0.05,
            0.6,
        );
        assert_eq!(next.speed, 0.0);
        assert_eq!(next.steering_angle, 0.6);
    }
}
