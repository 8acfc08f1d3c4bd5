use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::geometry::{ray_segment_hit, ConvexPolygon, Point2};
use crate::scene::{LidarPoint, PointCloud, SceneState};

/// A single planar scanner at the rear-axle origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub ray_count: usize,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub fov: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            ray_count: 360,
            max_range: 50.0,
            range_noise_sigma: 0.02,
            fov: std::f64::consts::TAU,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count == 0 {
            return Err(CageError::invalid("lidar", "ray_count must be >= 1"));
        }
        if !(self.max_range > 0.0) || !(self.range_noise_sigma >= 0.0) || !(self.fov > 0.0) {
            return Err(CageError::invalid("lidar", "max_range and fov must be > 0, sigma >= 0"));
        }
        Ok(())
    }

    /// Bearing of ray `i`; ray `ray_count / 2` points straight ahead.
    pub fn bearing(&self, i: usize) -> f64 {
        self.fov * (i as f64 / self.ray_count as f64 - 0.5)
    }
}

/// Casts every ray against the truth footprints and returns the nearest hit
/// per ray, with Gaussian range noise clamped to `[0, max_range]`.
pub fn scan_lidar<R: Rng + ?Sized>(truth: &SceneState, cfg: &LidarConfig, rng: &mut R) -> PointCloud {
    let footprints: Vec<ConvexPolygon> = truth.objects.iter().map(|o| o.footprint_in_ego(&truth.ego)).collect();
    let noise =
        (cfg.range_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.range_noise_sigma).expect("sigma validated"));
    let mut points = Vec::new();
    for i in 0..cfg.ray_count {
        let dir = Point2::from_angle(cfg.bearing(i));
        let hit = footprints
            .iter()
            .flat_map(|fp| {
                let v = fp.vertices();
                (0..v.len()).filter_map(move |k| ray_segment_hit(Point2::ORIGIN, dir, v[k], v[(k + 1) % v.len()]))
            })
            .fold(f64::INFINITY, f64::min);
        if hit > cfg.max_range {
            continue;
        }
        let range = match &noise {
            Some(n) => (hit + n.sample(rng)).clamp(0.0, cfg.max_range),
            None => hit,
        };
        points.push(LidarPoint {
            position: dir * range,
            intensity: None,
        });
    }
    PointCloud {
        tick: truth.tick,
        points,
    }
}
