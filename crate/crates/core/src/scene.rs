//! Shared domain types. World frame is metres with headings in radians; the
//! ego frame has its origin at the rear-axle centre, x forward, y left.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::geometry::{ConvexPolygon, Point2, Polygon};

pub const DEFAULT_MAX_STEERING: f64 = 0.6;

/// Identifier of a perception path (or of the fused / deterministic outputs).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub String);

impl SourceId {
    pub const DETERMINISTIC: &'static str = "deterministic";
    pub const FUSED: &'static str = "fused";

    pub fn new(id: impl Into<String>) -> Self {
        SourceId(id.into())
    }

    pub fn deterministic() -> Self {
        SourceId::new(Self::DETERMINISTIC)
    }

    pub fn fused() -> Self {
        SourceId::new(Self::FUSED)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        SourceId::new(s)
    }
}

/// Semantic class as reported by perception (and as seen by a camera).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Pedestrian,
    Vehicle,
    Truck,
    Bicycle,
    StaticObstacle,
    Poster,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 6] = [
        ObjectClass::Pedestrian,
        ObjectClass::Vehicle,
        ObjectClass::Truck,
        ObjectClass::Bicycle,
        ObjectClass::StaticObstacle,
        ObjectClass::Poster,
    ];
}

/// What an object physically is; what a range sensor can infer from shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalClass {
    Pedestrian,
    Vehicle,
    StaticObstacle,
}

impl PhysicalClass {
    pub fn as_object_class(self) -> ObjectClass {
        match self {
            PhysicalClass::Pedestrian => ObjectClass::Pedestrian,
            PhysicalClass::Vehicle => ObjectClass::Vehicle,
            PhysicalClass::StaticObstacle => ObjectClass::StaticObstacle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseTag {
    Standing,
    Lying,
    Riding,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgoState {
    pub position: Point2,
    pub heading: f64,
    pub speed: f64,
    pub steering_angle: f64,
    pub wheelbase: f64,
    pub width: f64,
    pub length: f64,
}

impl Default for EgoState {
    fn default() -> Self {
        // Compact hatchback dimensions.
        EgoState {
            position: Point2::ORIGIN,
            heading: 0.0,
            speed: 0.0,
            steering_angle: 0.0,
            wheelbase: 2.77,
            width: 1.81,
            length: 4.26,
        }
    }
}

impl EgoState {
    pub fn validate(&self, max_steering: f64) -> Result<()> {
        let bad = |reason: &str| Err(CageError::invalid("ego state", reason));
        if !(self.position.is_finite() && self.heading.is_finite() && self.speed.is_finite()) {
            return bad("non-finite field");
        }
        if self.speed < 0.0 {
            return bad("speed must be >= 0");
        }
        if !(self.wheelbase > 0.0 && self.width > 0.0 && self.length > 0.0) {
            return bad("wheelbase, width and length must be > 0");
        }
        if self.steering_angle.abs() > max_steering {
            return bad("steering angle exceeds the steering limit");
        }
        Ok(())
    }

    /// Distance from the rear axle to the rear bumper. Overhangs are split
    /// evenly front and back.
    pub fn rear_overhang(&self) -> f64 {
        ((self.length - self.wheelbase) / 2.0).max(0.0)
    }

    /// Ego-frame x coordinate of the front bumper.
    pub fn front_x(&self) -> f64 {
        self.length - self.rear_overhang()
    }

    /// Body outline in the ego frame.
    pub fn footprint(&self) -> Polygon {
        let (r, f, w) = (-self.rear_overhang(), self.front_x(), self.width / 2.0);
        Polygon::new(vec![
            Point2::new(r, -w),
            Point2::new(f, -w),
            Point2::new(f, w),
            Point2::new(r, w),
        ])
    }

    pub fn to_ego(&self, world: Point2) -> Point2 {
        transform_to_ego(world, self)
    }

    pub fn to_world(&self, local: Point2) -> Point2 {
        transform_from_ego(local, self)
    }
}

/// World point to ego frame: translate by −position, then rotate by −heading.
pub fn transform_to_ego(point: Point2, ego: &EgoState) -> Point2 {
    (point - ego.position).rotate(-ego.heading)
}

/// Inverse of [`transform_to_ego`].
pub fn transform_from_ego(point: Point2, ego: &EgoState) -> Point2 {
    point.rotate(ego.heading) + ego.position
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub id: String,
    pub visual_class: ObjectClass,
    pub physical_class: PhysicalClass,
    /// World-frame outline.
    pub footprint: ConvexPolygon,
    #[serde(default)]
    pub pose_tag: PoseTag,
    #[serde(default)]
    pub velocity: Point2,
}

impl TruthObject {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CageError::invalid("truth object", "empty id"));
        }
        if !self.velocity.is_finite() {
            return Err(CageError::invalid(
                format!("truth object {}", self.id),
                "non-finite velocity",
            ));
        }
        Ok(())
    }

    /// A poster: looks like a vehicle, is physically a flat static obstacle.
    pub fn is_poster(&self) -> bool {
        matches!(
            self.visual_class,
            ObjectClass::Vehicle | ObjectClass::Truck | ObjectClass::Poster
        ) && self.physical_class == PhysicalClass::StaticObstacle
    }

    pub fn footprint_in_ego(&self, ego: &EgoState) -> ConvexPolygon {
        self.footprint.map(|p| transform_to_ego(p, ego))
    }
}

/// Ground-truth world snapshot at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub tick: u64,
    pub time: f64,
    pub ego: EgoState,
    pub objects: Vec<TruthObject>,
}

impl SceneState {
    pub fn empty(ego: EgoState) -> Self {
        SceneState {
            tick: 0,
            time: 0.0,
            ego,
            objects: Vec::new(),
        }
    }
}

/// Box dimensions, serialized as `[length, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Extent {
    pub length: f64,
    pub width: f64,
}

impl From<[f64; 2]> for Extent {
    fn from(v: [f64; 2]) -> Self {
        Extent {
            length: v[0],
            width: v[1],
        }
    }
}

impl From<Extent> for [f64; 2] {
    fn from(e: Extent) -> Self {
        [e.length, e.width]
    }
}

impl Extent {
    pub fn new(length: f64, width: f64) -> Self {
        Extent { length, width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub object_class: ObjectClass,
    /// Ego frame.
    pub center: Point2,
    pub extent: Extent,
    pub heading: f64,
    pub confidence: f64,
    pub source: SourceId,
}

impl DetectedObject {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent.length > 0.0 && self.extent.width > 0.0) {
            return Err(CageError::invalid("detected object", "extent components must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CageError::invalid("detected object", "confidence outside [0, 1]"));
        }
        Ok(())
    }

    /// The detection's oriented box as a polygon (ego frame).
    pub fn outline(&self) -> Polygon {
        crate::geometry::OrientedRect {
            center: self.center,
            length: self.extent.length,
            width: self.extent.width,
            heading: self.heading,
        }
        .to_polygon()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectList {
    pub tick: u64,
    pub source: SourceId,
    pub objects: Vec<DetectedObject>,
}

impl ObjectList {
    pub fn empty(tick: u64, source: SourceId) -> Self {
        ObjectList {
            tick,
            source,
            objects: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            if o.source != self.source {
                return Err(CageError::invalid(
                    "object list",
                    format!("object from {} in list of {}", o.source, self.source),
                ));
            }
            o.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub position: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub tick: u64,
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(|p| p.position).collect()
    }
}
