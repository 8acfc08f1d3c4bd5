//! The deterministic fallback path: clusters LiDAR returns, fits a rectangle
//! or a circle to each cluster and classifies it by hardcoded size rules.
//! Nothing here is learned; output is a pure function of its inputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::geometry::{min_area_rect, min_enclosing_circle, Circle, OrientedRect, Point2};
use crate::perception::MIN_EXTENT;
use crate::scene::{DetectedObject, Extent, ObjectClass, ObjectList, PointCloud, SourceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Euclidean,
    #[default]
    Dbscan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
    pub method: ClusterMethod,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: 0.7,
            min_pts: 3,
            method: ClusterMethod::Dbscan,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CageError::invalid("cluster params", "eps must be > 0"));
        }
        if self.min_pts == 0 {
            return Err(CageError::invalid("cluster params", "min_pts must be >= 1"));
        }
        Ok(())
    }
}

/// Clusters as ascending index sets, ordered by their smallest index.
/// Points in no cluster are noise.
pub fn cluster(points: &[Point2], params: &ClusterParams) -> Vec<Vec<usize>> {
    let neighbors = neighborhoods(points, params.eps);
    let mut clusters = match params.method {
        ClusterMethod::Dbscan => dbscan(&neighbors, params.min_pts),
        ClusterMethod::Euclidean => components(&neighbors)
            .into_iter()
            .filter(|c| c.len() >= params.min_pts)
            .collect(),
    };
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

pub fn cluster_cloud(cloud: &PointCloud, params: &ClusterParams) -> Vec<Vec<usize>> {
    cluster(&cloud.positions(), params)
}

/// Closed eps-neighbourhoods, self included.
fn neighborhoods(points: &[Point2], eps: f64) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); points.len()];
    for i in 0..points.len() {
        out[i].push(i);
        for j in i + 1..points.len() {
            if points[i].distance(points[j]) <= eps {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for n in &mut out {
        n.sort_unstable();
    }
    out
}

fn components(neighbors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; neighbors.len()];
    let mut out = Vec::new();
    for start in 0..neighbors.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if !seen[q] {
                    seen[q] = true;
                    comp.push(q);
                    queue.push_back(q);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Standard DBSCAN in index order. A border point joins the first cluster
/// that reaches it.
fn dbscan(neighbors: &[Vec<usize>], min_pts: usize) -> Vec<Vec<usize>> {
    let is_core = |i: usize| neighbors[i].len() >= min_pts;
    let mut label: Vec<Option<usize>> = vec![None; neighbors.len()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for start in 0..neighbors.len() {
        if label[start].is_some() || !is_core(start) {
            continue;
        }
        let id = out.len();
        label[start] = Some(id);
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if label[q].is_some() {
                    continue;
                }
                label[q] = Some(id);
                members.push(q);
                if is_core(q) {
                    queue.push_back(q);
                }
            }
        }
        out.push(members);
    }
    out
}

pub const RESIDUAL_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub shape: Shape,
    /// Minimum-area oriented bounding rectangle of the cluster.
    pub rect: OrientedRect,
    pub circle: Circle,
    /// Normalized residual of the chosen shape.
    pub residual: f64,
    pub rect_residual: f64,
    pub circle_residual: f64,
    /// All points coincide; reported as a zero-radius cylinder.
    pub degenerate: bool,
}

impl ShapeFit {
    /// Extents compared against rules: rectangle (length, width), cylinder
    /// (radius, radius).
    pub fn rule_extents(&self) -> (f64, f64) {
        match self.shape {
            Shape::Rectangle => (self.rect.length, self.rect.width),
            Shape::Cylinder => (self.circle.radius, self.circle.radius),
        }
    }
}

/// Fits both shapes and keeps the one with the lower normalized residual
/// (mean distance to the fitted boundary over the characteristic size).
/// Residuals within `RESIDUAL_TIE` are a tie, settled by the smaller fitted
/// area and then in favour of the rectangle.
pub fn fit_shape(points: &[Point2]) -> Result<ShapeFit> {
    let rect = min_area_rect(points).ok_or_else(|| CageError::invalid("shape fit", "empty cluster"))?;
    let circle = min_enclosing_circle(points).ok_or_else(|| CageError::invalid("shape fit", "empty cluster"))?;
    if rect.length == 0.0 {
        return Ok(ShapeFit {
            shape: Shape::Cylinder,
            rect,
            circle: Circle {
                center: rect.center,
                radius: 0.0,
            },
            residual: 0.0,
            rect_residual: 0.0,
            circle_residual: 0.0,
            degenerate: true,
        });
    }
    let n = points.len() as f64;
    let rect_size = (rect.length + rect.width) / 2.0;
    let rect_residual = points.iter().map(|p| rect.boundary_distance(*p).abs()).sum::<f64>() / n / rect_size;
    let circle_residual = points
        .iter()
        .map(|p| (p.distance(circle.center) - circle.radius).abs())
        .sum::<f64>()
        / n
        / circle.radius;
    let circle_area = std::f64::consts::PI * circle.radius * circle.radius;
    let prefer_rect = if (rect_residual - circle_residual).abs() <= RESIDUAL_TIE {
        rect.area() <= circle_area
    } else {
        rect_residual < circle_residual
    };
    let (shape, residual) = if prefer_rect {
        (Shape::Rectangle, rect_residual)
    } else {
        (Shape::Cylinder, circle_residual)
    };
    Ok(ShapeFit {
        shape,
        rect,
        circle,
        residual,
        rect_residual,
        circle_residual,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeRule {
    pub shape: Shape,
    pub length_range: [f64; 2],
    pub width_range: [f64; 2],
    pub class_out: ObjectClass,
}

impl ShapeRule {
    pub fn matches(&self, fit: &ShapeFit) -> bool {
        let (l, w) = fit.rule_extents();
        let within = |r: [f64; 2], x: f64| r[0] <= x && x <= r[1];
        self.shape == fit.shape && within(self.length_range, l) && within(self.width_range, w)
    }
}

/// Vehicles as 3.5–6.0 m × 1.5–2.2 m rectangles, pedestrians as cylinders of
/// radius 0.1–0.5 m.
pub fn default_rules() -> Vec<ShapeRule> {
    vec![
        ShapeRule {
            shape: Shape::Rectangle,
            length_range: [3.5, 6.0],
            width_range: [1.5, 2.2],
            class_out: ObjectClass::Vehicle,
        },
        ShapeRule {
            shape: Shape::Cylinder,
            length_range: [0.1, 0.5],
            width_range: [0.1, 0.5],
            class_out: ObjectClass::Pedestrian,
        },
    ]
}

pub fn validate_rules(rules: &[ShapeRule]) -> Result<()> {
    let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1];
    for (i, rule) in rules.iter().enumerate() {
        if !ok(rule.length_range) || !ok(rule.width_range) {
            return Err(CageError::invalid(
                format!("shape rule {i}"),
                "ranges must satisfy 0 <= min <= max",
            ));
        }
        for (j, other) in rules.iter().enumerate().take(i) {
            let overlap = |a: [f64; 2], b: [f64; 2]| a[0] <= b[1] && b[0] <= a[1];
            if rule.shape == other.shape
                && overlap(rule.length_range, other.length_range)
                && overlap(rule.width_range, other.width_range)
            {
                return Err(CageError::invalid(
                    format!("shape rule {i}"),
                    format!("overlaps rule {j} for the same shape"),
                ));
            }
        }
    }
    Ok(())
}

/// First matching rule decides the class; otherwise `static_obstacle`.
pub fn classify_shape(fit: &ShapeFit, rules: &[ShapeRule]) -> DetectedObject {
    let object_class = rules
        .iter()
        .find(|r| r.matches(fit))
        .map(|r| r.class_out)
        .unwrap_or(ObjectClass::StaticObstacle);
    let (center, extent, heading) = match fit.shape {
        Shape::Rectangle => (
            fit.rect.center,
            Extent::new(fit.rect.length.max(MIN_EXTENT), fit.rect.width.max(MIN_EXTENT)),
            fit.rect.heading,
        ),
        Shape::Cylinder => {
            let d = (2.0 * fit.circle.radius).max(MIN_EXTENT);
            (fit.circle.center, Extent::new(d, d), 0.0)
        }
    };
    DetectedObject {
        object_class,
        center,
        extent,
        heading,
        confidence: 1.0,
        source: SourceId::deterministic(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallbackConfig {
    pub cluster: ClusterParams,
    pub rules: Vec<ShapeRule>,
}

impl Default for FallbackConfig {
    fn default() -> Self {
        FallbackConfig {
            cluster: ClusterParams::default(),
            rules: default_rules(),
        }
    }
}

impl FallbackConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        validate_rules(&self.rules)
    }
}

/// Runs the whole fallback path on one scan.
pub fn deterministic_perception(cloud: &PointCloud, cfg: &FallbackConfig) -> ObjectList {
    let points = cloud.positions();
    let objects = cluster(&points, &cfg.cluster)
        .into_iter()
        .filter_map(|idx| {
            let pts: Vec<Point2> = idx.iter().map(|&i| points[i]).collect();
            fit_shape(&pts).ok().map(|fit| classify_shape(&fit, &cfg.rules))
        })
        .collect();
    ObjectList {
        tick: cloud.tick,
        source: SourceId::deterministic(),
        objects,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(c: Point2, n: usize) -> Vec<Point2> {
        (0..n).map(|k| c + Point2::new(0.1 * k as f64, 0.0)).collect()
    }

    #[test]
    fn empty_cloud_no_clusters() {
        assert!(cluster(&[], &ClusterParams::default()).is_empty());
    }

    #[test]
    fn two_blobs_two_clusters() {
        let mut pts = blob(Point2::new(0.0, 0.0), 5);
        pts.extend(blob(Point2::new(10.0, 0.0), 5));
        for method in [ClusterMethod::Dbscan, ClusterMethod::Euclidean] {
            let p = ClusterParams {
                method,
                ..ClusterParams::default()
            };
            let c = cluster(&pts, &p);
            assert_eq!(c, vec![(0..5).collect::<Vec<_>>(), (5..10).collect()]);
        }
    }

    #[test]
    fn dbscan_min_pts_above_blob_size_is_all_noise() {
        let mut pts = blob(Point2::new(0.0, 0.0), 5);
        pts.extend(blob(Point2::new(10.0, 0.0), 5));
        let p = ClusterParams {
            min_pts: 6,
            ..ClusterParams::default()
        };
        assert!(cluster(&pts, &p).is_empty());
    }

    #[test]
    fn dbscan_border_point_joins_first_cluster() {
        // Two dense chains with one point in reach of both cores.
        let mut pts = blob(Point2::new(0.0, 0.0), 4);
        pts.push(Point2::new(0.95, 0.0));
        pts.extend(blob(Point2::new(1.6, 0.0), 4));
        let p = ClusterParams {
            eps: 0.66,
            min_pts: 4,
            method: ClusterMethod::Dbscan,
        };
        let c = cluster(&pts, &p);
        assert_eq!(c.len(), 2);
        assert!(c[0].contains(&4));
        assert!(!c[1].contains(&4));
    }

    #[test]
    fn rectangle_corners_fit_exactly() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(4.5, 0.0),
            Point2::new(4.5, 1.8),
            Point2::new(0.0, 1.8),
        ];
        let fit = fit_shape(&pts).unwrap();
        assert_eq!(fit.shape, Shape::Rectangle);
        assert!((fit.rect.length - 4.5).abs() < 1e-9);
        assert!((fit.rect.width - 1.8).abs() < 1e-9);
        assert!(fit.residual.abs() < 1e-12);
        let obj = classify_shape(&fit, &default_rules());
        assert_eq!(obj.object_class, ObjectClass::Vehicle);
    }

    #[test]
    fn ring_fits_cylinder() {
        let pts: Vec<Point2> = (0..8)
            .map(|k| Point2::from_angle(k as f64 * std::f64::consts::TAU / 8.0) * 0.3)
            .collect();
        let fit = fit_shape(&pts).unwrap();
        assert_eq!(fit.shape, Shape::Cylinder);
        assert!((fit.circle.radius - 0.3).abs() < 1e-9);
        let rule = ShapeRule {
            shape: Shape::Cylinder,
            length_range: [0.2, 0.5],
            width_range: [0.2, 0.5],
            class_out: ObjectClass::Pedestrian,
        };
        assert_eq!(classify_shape(&fit, &[rule]).object_class, ObjectClass::Pedestrian);
    }

    #[test]
    fn single_point_is_degenerate_cylinder() {
        let fit = fit_shape(&[Point2::new(1.0, 1.0)]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.shape, Shape::Cylinder);
        assert_eq!(fit.circle.radius, 0.0);
        let obj = classify_shape(&fit, &default_rules());
        assert_eq!(obj.object_class, ObjectClass::StaticObstacle);
        obj.validate().unwrap();
    }

    #[test]
    fn small_square_is_static_obstacle() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(0.2, 0.0),
            Point2::new(0.2, 0.2),
            Point2::new(0.0, 0.2),
        ];
        let fit = fit_shape(&pts).unwrap();
        assert_eq!(fit.shape, Shape::Rectangle);
        assert_eq!(
            classify_shape(&fit, &default_rules()).object_class,
            ObjectClass::StaticObstacle
        );
    }

    #[test]
    fn overlapping_rules_rejected() {
        let mut rules = default_rules();
        validate_rules(&rules).unwrap();
        rules.push(ShapeRule {
            shape: Shape::Rectangle,
            length_range: [5.0, 8.0],
            width_range: [2.0, 3.0],
            class_out: ObjectClass::Truck,
        });
        assert!(validate_rules(&rules).is_err());
        rules.pop();
        rules.push(ShapeRule {
            shape: Shape::Rectangle,
            length_range: [6.5, 12.0],
            width_range: [2.0, 3.0],
            class_out: ObjectClass::Truck,
        });
        validate_rules(&rules).unwrap();
    }
}
