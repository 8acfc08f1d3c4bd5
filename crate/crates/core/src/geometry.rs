//! Plan-view geometry: points, polygons, hulls, and the bounding-shape fits
//! used by the fallback path.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::CageError;

const AREA_EPS: f64 = 1e-12;

/// A 2D point or vector in metres. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Point2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Left-hand perpendicular (rotated +90°).
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            Point2::new(self.x / n, self.y / n)
        }
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Shoelace signed area; positive for counter-clockwise vertex order.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    acc * 0.5
}

/// Area centroid of a simple polygon. Falls back to the vertex mean when the
/// area vanishes.
pub fn centroid(vertices: &[Point2]) -> Point2 {
    let a = signed_area(vertices);
    if a.abs() < AREA_EPS {
        let n = vertices.len().max(1) as f64;
        let s = vertices.iter().fold(Point2::ORIGIN, |acc, p| acc + *p);
        return s * (1.0 / n);
    }
    let n = vertices.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        let w = p.cross(q);
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Point2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// A simple polygon with counter-clockwise vertices. May be non-convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<Point2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Polygon { vertices }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd containment; points on the boundary count as inside when
    /// within `tol` of an edge.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        if self.boundary_distance(p) <= tol {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every vertex of `other` lies inside this polygon (within `tol`).
    pub fn contains_vertices_of(&self, other: &Polygon, tol: f64) -> bool {
        other.vertices.iter().all(|v| self.contains(*v, tol))
    }

    /// Whether the two polygons share any area or boundary point.
    pub fn intersects(&self, other: &Polygon) -> bool {
        if self.vertices.is_empty() || other.vertices.is_empty() {
            return false;
        }
        if other.vertices.iter().any(|v| self.contains(*v, 0.0))
            || self.vertices.iter().any(|v| other.contains(*v, 0.0))
        {
            return true;
        }
        self.edges()
            .any(|(a, b)| other.edges().any(|(c, d)| segments_intersect(a, b, c, d)))
    }

    pub fn translate(&self, offset: Point2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|v| *v + offset).collect(),
        }
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Distance along a ray from `origin` in unit direction `dir` to segment
/// `a`–`b`, if they meet.
pub fn ray_segment_hit(origin: Point2, dir: Point2, a: Point2, b: Point2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = a - origin;
    let t = w.cross(e) / denom;
    let s = w.cross(dir) / denom;
    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
        Some(t)
    } else {
        None
    }
}

/// A validated convex polygon (≥ 3 vertices, positive area, CCW order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for ConvexPolygon {
    type Error = CageError;

    fn try_from(vertices: Vec<Point2>) -> Result<Self, Self::Error> {
        ConvexPolygon::new(vertices)
    }
}

impl From<ConvexPolygon> for Vec<Point2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, CageError> {
        if vertices.len() < 3 {
            return Err(CageError::invalid("footprint", "needs at least 3 vertices"));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(CageError::invalid("footprint", "non-finite vertex"));
        }
        let area = signed_area(&vertices);
        if area.abs() <= AREA_EPS {
            return Err(CageError::invalid("footprint", "degenerate (zero area)"));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        let scale = vertices.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for i in 0..n {
            let turn = orient(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if turn < -1e-9 * scale * scale {
                return Err(CageError::invalid("footprint", "polygon is not convex"));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    /// Rectangle centred at `center` with the given `length`
    /// along `heading` and `width` across it.
    pub fn oriented_rect(center: Point2, length: f64, width: f64, heading: f64) -> Result<Self, CageError> {
        let u = Point2::from_angle(heading);
        let v = u.perp();
        let (hl, hw) = (length / 2.0, width / 2.0);
        ConvexPolygon::new(vec![
            center - u * hl - v * hw,
            center + u * hl - v * hw,
            center + u * hl + v * hw,
            center - u * hl + v * hw,
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        centroid(&self.vertices)
    }

    /// Applies a rigid map to every vertex. Orientation is preserved for
    /// proper rotations.
    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: self.vertices.clone(),
        }
    }

    /// Area of the intersection with an axis-aligned box `[lo, hi]`.
    pub fn clipped_area(&self, lo: Point2, hi: Point2) -> f64 {
        let mut poly = self.vertices.clone();
        // Clip against x >= lo.x, x <= hi.x, y >= lo.y, y <= hi.y.
        let planes: [(Point2, f64); 4] = [
            (Point2::new(1.0, 0.0), lo.x),
            (Point2::new(-1.0, 0.0), -hi.x),
            (Point2::new(0.0, 1.0), lo.y),
            (Point2::new(0.0, -1.0), -hi.y),
        ];
        for (normal, offset) in planes {
            poly = clip_half_plane(&poly, normal, offset);
            if poly.len() < 3 {
                return 0.0;
            }
        }
        signed_area(&poly).max(0.0)
    }
}

/// Sutherland–Hodgman step keeping the side `normal · p >= offset`.
pub fn clip_half_plane(poly: &[Point2], normal: Point2, offset: f64) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let dc = normal.dot(cur) - offset;
        let dn = normal.dot(next) - offset;
        if dc >= 0.0 {
            out.push(cur);
        }
        if (dc >= 0.0) != (dn >= 0.0) {
            let t = dc / (dc - dn);
            out.push(cur.lerp(next, t));
        }
    }
    out
}

/// Convex hull by Andrew's monotone chain. Counter-clockwise, collinear
/// points dropped. Returns 1 or 2 points for degenerate input.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && lower[0] == lower[1] {
        lower.pop();
    }
    lower
}

/// Oriented rectangle: centre, side lengths, and the heading of the
/// `length` side. `length >= width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedRect {
    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Local coordinates of `p` in the rectangle frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.center).rotate(-self.heading)
    }

    pub fn corners(&self) -> [Point2; 4] {
        let u = Point2::from_angle(self.heading);
        let v = u.perp();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [
            self.center - u * hl - v * hw,
            self.center + u * hl - v * hw,
            self.center + u * hl + v * hw,
            self.center - u * hl + v * hw,
        ]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec())
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        let l = self.to_local(p);
        let dx = l.x.abs() - self.length / 2.0;
        let dy = l.y.abs() - self.width / 2.0;
        if dx <= 0.0 && dy <= 0.0 {
            dx.max(dy)
        } else {
            Point2::new(dx.max(0.0), dy.max(0.0)).norm()
        }
    }

    fn from_frame(u: Point2, min_u: f64, max_u: f64, min_v: f64, max_v: f64) -> OrientedRect {
        let v = u.perp();
        let center = u * ((min_u + max_u) / 2.0) + v * ((min_v + max_v) / 2.0);
        let (du, dv) = (max_u - min_u, max_v - min_v);
        let (length, width, dir) = if du >= dv { (du, dv, u) } else { (dv, du, v) };
        OrientedRect {
            center,
            length,
            width,
            heading: normalize_axis_angle(dir.y.atan2(dir.x)),
        }
    }
}

/// Folds a direction angle onto (−π/2, π/2], since a rectangle axis has no sign.
pub fn normalize_axis_angle(theta: f64) -> f64 {
    let mut t = wrap_angle(theta);
    if t > std::f64::consts::FRAC_PI_2 {
        t -= std::f64::consts::PI;
    } else if t <= -std::f64::consts::FRAC_PI_2 {
        t += std::f64::consts::PI;
    }
    t
}

/// Wraps an angle onto (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Minimum-area enclosing rectangle via rotating calipers over the convex hull.
/// Returns `None` for an empty input.
pub fn min_area_rect(points: &[Point2]) -> Option<OrientedRect> {
    let hull = convex_hull(points);
    match hull.len() {
        0 => None,
        1 => Some(OrientedRect {
            center: hull[0],
            length: 0.0,
            width: 0.0,
            heading: 0.0,
        }),
        2 => {
            let d = hull[1] - hull[0];
            Some(OrientedRect {
                center: hull[0].lerp(hull[1], 0.5),
                length: d.norm(),
                width: 0.0,
                heading: normalize_axis_angle(d.y.atan2(d.x)),
            })
        }
        _ => Some(rotating_calipers(&hull)),
    }
}

fn rotating_calipers(hull: &[Point2]) -> OrientedRect {
    let n = hull.len();
    let dir = |i: usize| (hull[(i + 1) % n] - hull[i]).normalized();
    let argmax = |f: &dyn Fn(Point2) -> f64| {
        (0..n)
            .max_by(|&a, &b| f(hull[a]).total_cmp(&f(hull[b])).then(b.cmp(&a)))
            .unwrap_or(0)
    };

    let u0 = dir(0);
    let mut right = argmax(&|p| p.dot(u0));
    let mut top = argmax(&|p| p.dot(u0.perp()));
    let mut left = argmax(&|p| -p.dot(u0));

    let mut best: Option<(f64, OrientedRect)> = None;
    for i in 0..n {
        let u = dir(i);
        let v = u.perp();
        if i > 0 {
            for _ in 0..n {
                if hull[(right + 1) % n].dot(u) >= hull[right].dot(u) {
                    right = (right + 1) % n;
                } else {
                    break;
                }
            }
            for _ in 0..n {
                if hull[(top + 1) % n].dot(v) >= hull[top].dot(v) {
                    top = (top + 1) % n;
                } else {
                    break;
                }
            }
            for _ in 0..n {
                if hull[(left + 1) % n].dot(u) <= hull[left].dot(u) {
                    left = (left + 1) % n;
                } else {
                    break;
                }
            }
        }
        let (min_u, max_u) = (hull[left].dot(u), hull[right].dot(u));
        let (min_v, max_v) = (hull[i].dot(v), hull[top].dot(v));
        let area = (max_u - min_u) * (max_v - min_v);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            best = Some((area, OrientedRect::from_frame(u, min_u, max_u, min_v, max_v)));
        }
    }
    best.map(|(_, r)| r).expect("hull has at least three vertices")
}

/// Bounding rectangle of `points` whose length axis is at angle `theta`.
pub fn bounding_rect_at(points: &[Point2], theta: f64) -> OrientedRect {
    let u = Point2::from_angle(theta);
    let v = u.perp();
    let (mut min_u, mut max_u, mut min_v, mut max_v) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_u = min_u.min(p.dot(u));
        max_u = max_u.max(p.dot(u));
        min_v = min_v.min(p.dot(v));
        max_v = max_v.max(p.dot(v));
    }
    OrientedRect::from_frame(u, min_u, max_u, min_v, max_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    fn contains(&self, p: Point2) -> bool {
        p.distance(self.center) <= self.radius * (1.0 + 1e-12) + 1e-12
    }

    fn diameter(a: Point2, b: Point2) -> Circle {
        Circle {
            center: a.lerp(b, 0.5),
            radius: a.distance(b) / 2.0,
        }
    }

    fn circumscribed(a: Point2, b: Point2, c: Point2) -> Circle {
        let ab = b - a;
        let ac = c - a;
        let d = 2.0 * ab.cross(ac);
        if d.abs() < 1e-15 {
            // Collinear: the widest pair spans the circle.
            let pairs = [(a, b), (a, c), (b, c)];
            let (p, q) = pairs
                .into_iter()
                .max_by(|x, y| x.0.distance(x.1).total_cmp(&y.0.distance(y.1)))
                .unwrap_or((a, b));
            return Circle::diameter(p, q);
        }
        let ab2 = ab.dot(ab);
        let ac2 = ac.dot(ac);
        let offset = Point2::new(ac.y * ab2 - ab.y * ac2, ab.x * ac2 - ac.x * ab2) * (1.0 / d);
        Circle {
            center: a + offset,
            radius: offset.norm(),
        }
    }
}

/// Smallest enclosing circle (incremental Welzl, fixed input order).
pub fn min_enclosing_circle(points: &[Point2]) -> Option<Circle> {
    let first = *points.first()?;
    let mut c = Circle {
        center: first,
        radius: 0.0,
    };
    for i in 1..points.len() {
        if c.contains(points[i]) {
            continue;
        }
        c = Circle {
            center: points[i],
            radius: 0.0,
        };
        for j in 0..i {
            if c.contains(points[j]) {
                continue;
            }
            c = Circle::diameter(points[i], points[j]);
            for k in 0..j {
                if !c.contains(points[k]) {
                    c = Circle::circumscribed(points[i], points[j], points[k]);
                }
            }
        }
    }
    Some(c)
}
