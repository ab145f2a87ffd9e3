//! Plan-view geometry primitives shared by the model, GIS and grid stages.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertices closer than this are considered duplicates.
pub const VERTEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2 { x, y }
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// A planar rigid transform (rotation about +z followed by translation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2D {
    fn default() -> Self {
        Pose2D::IDENTITY
    }
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2 {
            x: c * p.x - s * p.y + self.x,
            y: s * p.x + c * p.y + self.y,
        }
    }

    /// `self ∘ inner`: a pose expressed in `self`'s frame, moved to the
    /// frame `self` is expressed in.
    pub fn compose(&self, inner: &Pose2D) -> Pose2D {
        let origin = self.apply(Point2::new(inner.x, inner.y));
        Pose2D::new(origin.x, origin.y, self.theta + inner.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }
}

/// Signed shoelace area (positive for counter-clockwise rings).
pub fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    twice / 2.0
}

/// Even-odd containment test on a raw ring. A horizontal ray is cast towards
/// +x; an edge counts when its endpoints straddle `p.y` (half-open in y) and
/// the crossing lies strictly right of `p.x`.
pub fn ring_contains(ring: &[Point2], p: Point2) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < edge_crossing_x(a, b, p.y) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// x coordinate where segment `a`–`b` crosses the horizontal line `y`.
/// Callers guarantee the segment straddles `y`.
#[inline]
pub fn edge_crossing_x(a: Point2, b: Point2, y: f64) -> f64 {
    (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
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

/// Distance from `p` to segment `a`–`b`.
pub fn segment_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Axis-aligned bounding rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn of_points(pts: impl IntoIterator<Item = Point2>) -> Option<Rect> {
        pts.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => Rect::new(p.x, p.y, p.x, p.y),
                Some(r) => r.include(p),
            })
        })
    }

    pub fn include(self, p: Point2) -> Rect {
        Rect::new(
            self.min_x.min(p.x),
            self.min_y.min(p.y),
            self.max_x.max(p.x),
            self.max_y.max(p.y),
        )
    }

    pub fn union(self, other: Rect) -> Rect {
        Rect::new(
            self.min_x.min(other.min_x),
            self.min_y.min(other.min_y),
            self.max_x.max(other.max_x),
            self.max_y.max(other.max_y),
        )
    }

    pub fn padded(self, by: f64) -> Rect {
        Rect::new(self.min_x - by, self.min_y - by, self.max_x + by, self.max_y + by)
    }
}

/// A simple polygon, stored counter-clockwise without a closing vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon2D {
    vertices: Vec<Point2>,
}

impl Polygon2D {
    /// Validate and normalize: drops repeated consecutive vertices (including
    /// an explicit closing vertex), rejects degenerate or self-intersecting
    /// rings, and orients counter-clockwise.
    pub fn new(vertices: impl IntoIterator<Item = Point2>) -> Result<Self, GeometryError> {
        let mut pts: Vec<Point2> = Vec::new();
        for v in vertices {
            if pts.last().is_none_or(|last| last.distance(v) > VERTEX_EPS) {
                pts.push(v);
            }
        }
        while pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= VERTEX_EPS {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(GeometryError::TooFewVertices(pts.len()));
        }
        let area = signed_area(&pts);
        if area.abs() <= f64::EPSILON * bbox_scale(&pts) {
            return Err(GeometryError::Degenerate);
        }
        if area < 0.0 {
            pts.reverse();
        }
        check_simple(&pts)?;
        Ok(Polygon2D { vertices: pts })
    }

    /// Axis-aligned rectangle from its corners.
    pub fn rectangle(min: Point2, max: Point2) -> Result<Self, GeometryError> {
        Polygon2D::new([min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        // shift to the first vertex to keep large world coordinates accurate
        let o = self.vertices[0];
        let (mut cx, mut cy, mut twice) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let a = Point2::new(self.vertices[i].x - o.x, self.vertices[i].y - o.y);
            let b = self.vertices[(i + 1) % n];
            let b = Point2::new(b.x - o.x, b.y - o.y);
            let cross = a.x * b.y - b.x * a.y;
            twice += cross;
            cx += (a.x + b.x) * cross;
            cy += (a.y + b.y) * cross;
        }
        Point2::new(o.x + cx / (3.0 * twice), o.y + cy / (3.0 * twice))
    }

    pub fn contains(&self, p: Point2) -> bool {
        ring_contains(&self.vertices, p)
    }

    /// True when `p` lies within `tol` of an edge.
    pub fn on_boundary(&self, p: Point2, tol: f64) -> bool {
        self.edges().any(|(a, b)| segment_distance(a, b, p) <= tol)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bbox(&self) -> Rect {
        Rect::of_points(self.vertices.iter().copied()).expect("polygon has vertices")
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| orient(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]) >= 0.0)
    }

    /// Map every vertex through `f` and re-normalize.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<Polygon2D, GeometryError> {
        Polygon2D::new(self.vertices.iter().map(|&p| f(p)))
    }

    pub fn transformed(&self, pose: &Pose2D) -> Polygon2D {
        // rigid motions preserve simplicity and orientation
        Polygon2D {
            vertices: self.vertices.iter().map(|&p| pose.apply(p)).collect(),
        }
    }
}

fn bbox_scale(pts: &[Point2]) -> f64 {
    let r = Rect::of_points(pts.iter().copied()).unwrap();
    let span = (r.max_x - r.min_x).max(r.max_y - r.min_y);
    span * span
}

fn check_simple(pts: &[Point2]) -> Result<(), GeometryError> {
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if adjacent {
                // adjacent edges share a vertex; they may only overlap if collinear and folding back
                let shared = if j == i + 1 { b } else { a };
                let (other_a, other_b) = if j == i + 1 { (a, d) } else { (b, c) };
                if orient(shared, other_a, other_b) == 0.0 {
                    let da = (other_a.x - shared.x, other_a.y - shared.y);
                    let db = (other_b.x - shared.x, other_b.y - shared.y);
                    if da.0 * db.0 + da.1 * db.1 > 0.0 {
                        return Err(GeometryError::SelfIntersecting(i, j));
                    }
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}
