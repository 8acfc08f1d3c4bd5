//! Brute-force reference implementations used by the integration tests.
//! They share only the `Point2` value type with the library.

#![allow(dead_code)]

use cage_core::geometry::Point2;

fn p(x: f64, y: f64) -> Point2 {
    Point2 { x, y }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Connected components of the graph with an edge wherever two points lie
/// within `eps`, as ascending index sets ordered by smallest member.
pub fn eps_components(points: &[Point2], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(points[i], points[j]) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Area of the axis-aligned bounding box of `points` in the frame rotated by
/// `theta`.
pub fn bbox_area_at(points: &[Point2], theta: f64) -> f64 {
    let (c, s) = (theta.cos(), theta.sin());
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in points {
        let u = q.x * c + q.y * s;
        let v = -q.x * s + q.y * c;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    (u1 - u0) * (v1 - v0)
}

/// Grid angle `k · 0.1°` in radians.
pub fn grid_angle(k: u32) -> f64 {
    k as f64 * std::f64::consts::PI / 1800.0
}

/// Smallest bounding-box area over orientations 0°, 0.1°, …, 179.9°.
pub fn min_rect_area_sweep(points: &[Point2]) -> f64 {
    (0..1800)
        .map(|k| bbox_area_at(points, grid_angle(k)))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest bounding-box area over the directions of every point pair. The
/// optimal rectangle has a side along a hull edge, and every hull edge joins
/// two input points.
pub fn min_rect_area_pairs(points: &[Point2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (dx, dy) = (points[j].x - points[i].x, points[j].y - points[i].y);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            best = best.min(bbox_area_at(points, dy.atan2(dx)));
        }
    }
    best
}

/// Keeps the part of `poly` where `n · x <= c`.
fn clip(poly: &[Point2], n: Point2, c: f64) -> Vec<Point2> {
    let side = |q: Point2| n.x * q.x + n.y * q.y - c;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (side(a), side(b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push(p(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
        }
    }
    out
}

/// Convex polygon cut from a 20 m square by half-planes whose normals are
/// multiples of 0.1°, so every edge direction lies on the sweep grid.
/// `cuts` holds (grid index in 0..3600, offset from the origin).
pub fn quantized_hull(cuts: &[(u32, f64)]) -> Vec<Point2> {
    let mut poly = vec![p(-10.0, -10.0), p(10.0, -10.0), p(10.0, 10.0), p(-10.0, 10.0)];
    for &(k, c) in cuts {
        let a = grid_angle(k);
        poly = clip(&poly, p(a.cos(), a.sin()), c);
    }
    poly
}

/// Winding-number containment, with points within `tol` of the boundary
/// counted as inside.
pub fn point_in_polygon(poly: &[Point2], q: Point2, tol: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        if point_segment_distance(q, poly[i], poly[(i + 1) % n]) <= tol {
            return true;
        }
    }
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a.y <= q.y {
            if b.y > q.y && cross(a, b, q) > 0.0 {
                winding += 1;
            }
        } else if b.y <= q.y && cross(a, b, q) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

pub fn point_segment_distance(q: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    dist(q, p(a.x + dx * t, a.y + dy * t))
}

/// Two segments cross at a single interior point of both.
fn proper_crossing(a: Point2, b: Point2, c: Point2, d: Point2, tol: f64) -> bool {
    let (d1, d2) = (cross(a, b, c), cross(a, b, d));
    let (d3, d4) = (cross(c, d, a), cross(c, d, b));
    let scale_ab = dist(a, b).max(1e-12);
    let scale_cd = dist(c, d).max(1e-12);
    let s = |v: f64, l: f64| {
        let h = v / l;
        if h > tol {
            1
        } else if h < -tol {
            -1
        } else {
            0
        }
    };
    s(d1, scale_ab) * s(d2, scale_ab) < 0 && s(d3, scale_cd) * s(d4, scale_cd) < 0
}

/// `inner ⊆ outer` for simple polygons: every inner vertex lies in `outer`
/// and no pair of edges properly crosses.
pub fn polygon_within(inner: &[Point2], outer: &[Point2], tol: f64) -> bool {
    if !inner.iter().all(|&q| point_in_polygon(outer, q, tol)) {
        return false;
    }
    let (n, m) = (inner.len(), outer.len());
    for i in 0..n {
        for j in 0..m {
            if proper_crossing(inner[i], inner[(i + 1) % n], outer[j], outer[(j + 1) % m], tol) {
                return false;
            }
        }
    }
    true
}

/// Same vertex set up to `tol`, ignoring order.
pub fn same_point_set(a: &[Point2], b: &[Point2], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|q| b.iter().any(|r| dist(*q, *r) <= tol))
        && b.iter().all(|q| a.iter().any(|r| dist(*q, *r) <= tol))
}

/// Separating-axis test for two convex polygons; touching counts as
/// intersecting.
pub fn convex_intersect(a: &[Point2], b: &[Point2]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let (e0, e1) = (poly[i], poly[(i + 1) % poly.len()]);
            let axis = p(-(e1.y - e0.y), e1.x - e0.x);
            let proj = |s: &[Point2]| {
                s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                    let v = q.x * axis.x + q.y * axis.y;
                    (lo.min(v), hi.max(v))
                })
            };
            let ((a0, a1), (b0, b1)) = (proj(a), proj(b));
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

/// World point into the frame at `origin` rotated by `heading`.
pub fn to_local(q: Point2, origin: Point2, heading: f64) -> Point2 {
    let (dx, dy) = (q.x - origin.x, q.y - origin.y);
    let (c, s) = (heading.cos(), heading.sin());
    p(dx * c + dy * s, -dx * s + dy * c)
}

/// Straight-ahead focus zone as an axis-aligned rectangle in the ego frame:
/// body from the rear bumper, then the stopping distance grown by
/// `focus_extension` plus the standstill margin ahead of the front bumper.
pub struct StraightZone {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
    pub a_max: f64,
    pub t_react: f64,
    pub lateral_margin: f64,
    pub standstill_margin: f64,
    pub focus_extension: f64,
}

impl StraightZone {
    pub fn focus_rect(&self, speed: f64) -> Vec<Point2> {
        let overhang = ((self.length - self.wheelbase) / 2.0).max(0.0);
        let front = self.length - overhang;
        let d = speed * self.t_react + speed * speed / (2.0 * self.a_max);
        let grow = 1.0 + self.focus_extension;
        let x1 = front + d * grow + self.standstill_margin;
        let h = self.width / 2.0 + self.lateral_margin * grow;
        vec![p(-overhang, -h), p(x1, -h), p(x1, h), p(-overhang, h)]
    }
}

/// Coverage of each cell of a `size × size` window by `polys`, estimated on
/// an `n × n` grid of sample points per cell (clamped to 1 like the raster).
pub fn monte_carlo_raster(polys: &[Vec<Point2>], origin: Point2, w: f64, h: f64, size: usize, n: usize) -> Vec<f64> {
    let (cw, ch) = (w / size as f64, h / size as f64);
    let mut out = vec![0.0; size * size];
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0usize;
            for i in 0..n {
                for j in 0..n {
                    let q = p(
                        origin.x + (col as f64 + (i as f64 + 0.5) / n as f64) * cw,
                        origin.y + (row as f64 + (j as f64 + 0.5) / n as f64) * ch,
                    );
                    hits += polys.iter().filter(|poly| point_in_polygon(poly, q, 0.0)).count();
                }
            }
            out[row * size + col] = (hits as f64 / (n * n) as f64).min(1.0);
        }
    }
    out
}

/// Nearest-rank quantile at `pct` percent: the `⌈pct·n/100⌉`-th smallest,
/// in integer arithmetic.
pub fn nearest_rank_pct(values: &[f64], pct: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (pct * v.len()).div_ceil(100).max(1);
    v[k.min(v.len()) - 1]
}
