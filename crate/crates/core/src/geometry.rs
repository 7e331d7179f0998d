//! Planar poses, convex shapes and exact collision queries.
//!
//! Every shape is handled as a rounded convex core: a point, a segment or a
//! convex polygon, dilated by a radius. Discs are rounded points, arm links
//! are rounded segments (capsules) and polygons have zero radius.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `(-pi, pi]`. Values already in range are returned
/// unchanged so normalization is idempotent.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a point from this pose's local frame into the world frame.
    pub fn transform_point(&self, p: &Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn normalized(self) -> Self {
        Self::new(self.x, self.y, self.theta)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("disc radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon must be strictly convex with counter-clockwise winding")]
    NotConvexCcw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    pub fn disc(radius: f64) -> Self {
        Shape::Disc { radius }
    }

    /// Axis-aligned rectangle centered on the local origin.
    pub fn rectangle(width: f64, height: f64) -> Self {
        let (hw, hh) = (width / 2.0, height / 2.0);
        Shape::Polygon {
            vertices: vec![[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]],
        }
    }

    pub fn square(side: f64) -> Self {
        Self::rectangle(side, side)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        match self {
            Shape::Disc { radius } => {
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(ShapeError::NonPositiveRadius(*radius))
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(ShapeError::TooFewVertices(n));
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                    if !(cross > 0.0) {
                        return Err(ShapeError::NotConvexCcw);
                    }
                }
                // A star polygon passes the turn test above but winds more than once.
                let total: f64 = (0..n)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        let c = vertices[(i + 2) % n];
                        let d1 = (b[1] - a[1]).atan2(b[0] - a[0]);
                        let d2 = (c[1] - b[1]).atan2(c[0] - b[0]);
                        wrap_angle(d2 - d1)
                    })
                    .sum();
                if (total - 2.0 * PI).abs() > 1e-6 {
                    return Err(ShapeError::NotConvexCcw);
                }
                Ok(())
            }
        }
    }

    /// Radius of the smallest origin-centered circle containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Disc { radius } => *radius,
            Shape::Polygon { vertices } => vertices
                .iter()
                .map(|v| v[0].hypot(v[1]))
                .fold(0.0, f64::max),
        }
    }

    pub fn to_convex(&self, pose: &Pose2) -> Convex {
        match self {
            Shape::Disc { radius } => Convex::disc(pose.position(), *radius),
            Shape::Polygon { vertices } => {
                let pts = vertices
                    .iter()
                    .map(|v| pose.transform_point(&Vec2::new(v[0], v[1])))
                    .collect();
                Convex {
                    core: pts,
                    radius: 0.0,
                    center: pose.position(),
                    bound: self.bounding_radius(),
                }
            }
        }
    }
}

/// A convex core (1 vertex = point, 2 = segment, 3+ = CCW polygon) dilated
/// by `radius`, in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Convex {
    pub core: SmallVec<[Vec2; 6]>,
    pub radius: f64,
    center: Vec2,
    bound: f64,
}

impl Convex {
    pub fn disc(center: Vec2, radius: f64) -> Self {
        let mut core = SmallVec::new();
        core.push(center);
        Self {
            core,
            radius,
            center,
            bound: radius,
        }
    }

    pub fn capsule(a: Vec2, b: Vec2, radius: f64) -> Self {
        let mut core = SmallVec::new();
        core.push(a);
        core.push(b);
        let center = (a + b) * 0.5;
        Self {
            core,
            radius,
            center,
            bound: (b - a).norm() * 0.5 + radius,
        }
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    /// Circle around `center()` that contains the whole shape.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.core.len();
        let count = match n {
            1 => 0,
            2 => 1,
            _ => n,
        };
        (0..count).map(move |i| (self.core[i], self.core[(i + 1) % n]))
    }

    fn axes(&self, out: &mut SmallVec<[Vec2; 16]>) {
        match self.core.len() {
            1 => {}
            2 => {
                let d = self.core[1] - self.core[0];
                let len = d.norm();
                if len > 0.0 {
                    let d = d / len;
                    out.push(Vec2::new(d.y, -d.x));
                    out.push(d);
                }
            }
            _ => {
                for (a, b) in self.edges() {
                    let d = (b - a).normalize();
                    out.push(Vec2::new(d.y, -d.x));
                }
            }
        }
    }

    fn project(&self, axis: &Vec2) -> (f64, f64) {
        self.core
            .iter()
            .map(|p| p.dot(axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Midpoint of the core vertices that are extreme along `dir`.
    fn support_mid(&self, dir: &Vec2) -> Vec2 {
        let best = self
            .core
            .iter()
            .map(|p| p.dot(dir))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = Vec2::zeros();
        let mut count = 0.0;
        for p in &self.core {
            if p.dot(dir) >= best - 1e-9 {
                sum += p;
                count += 1.0;
            }
        }
        sum / count
    }
}

fn closest_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Separating-axis overlap of two cores. Returns `None` when separated, else
/// the minimum overlap and its axis oriented from `b` towards `a`.
fn core_overlap(a: &Convex, b: &Convex) -> Option<(f64, Vec2)> {
    let mut axes: SmallVec<[Vec2; 16]> = SmallVec::new();
    a.axes(&mut axes);
    b.axes(&mut axes);
    if axes.is_empty() {
        // Two points.
        let d = a.core[0] - b.core[0];
        return if d.norm_squared() == 0.0 {
            Some((0.0, Vec2::new(1.0, 0.0)))
        } else {
            None
        };
    }
    let mut best: Option<(f64, Vec2)> = None;
    for axis in &axes {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        if amax < bmin || bmax < amin {
            return None;
        }
        let (overlap, n) = if bmax - amin <= amax - bmin {
            (bmax - amin, *axis)
        } else {
            (amax - bmin, -axis)
        };
        if best.is_none_or(|(o, _)| overlap < o) {
            best = Some((overlap, n));
        }
    }
    best
}

/// Closest points between two non-intersecting cores: (distance, on a, on b).
fn core_closest(a: &Convex, b: &Convex) -> (f64, Vec2, Vec2) {
    let mut best = (f64::INFINITY, a.core[0], b.core[0]);
    let mut consider = |d: f64, pa: Vec2, pb: Vec2| {
        if d < best.0 {
            best = (d, pa, pb);
        }
    };
    if a.core.len() == 1 && b.core.len() == 1 {
        let d = (a.core[0] - b.core[0]).norm();
        consider(d, a.core[0], b.core[0]);
    }
    for (e0, e1) in b.edges() {
        for p in &a.core {
            let q = closest_on_segment(p, &e0, &e1);
            consider((p - q).norm(), *p, q);
        }
    }
    for (e0, e1) in a.edges() {
        for p in &b.core {
            let q = closest_on_segment(p, &e0, &e1);
            consider((p - q).norm(), q, *p);
        }
    }
    best
}

/// Result of a proximity query between `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Signed distance between the regions; negative when they overlap.
    pub distance: f64,
    /// Unit vector pointing from `b` towards `a`.
    pub normal: Vec2,
    /// Approximate contact location on the boundary of `b`.
    pub point: Vec2,
}

impl Contact {
    pub fn depth(&self) -> f64 {
        (-self.distance).max(0.0)
    }
}

pub fn contact(a: &Convex, b: &Convex) -> Contact {
    let overlap = core_overlap(a, b);
    if overlap.is_none() {
        let (d, pa, pb) = core_closest(a, b);
        if d > 1e-14 {
            let normal = (pa - pb) / d;
            return Contact {
                distance: d - a.radius - b.radius,
                normal,
                point: pb + normal * b.radius,
            };
        }
    }
    let (overlap, normal) = overlap.unwrap_or_else(|| {
        // Cores touch within rounding: fall back to the center direction.
        let d = a.center - b.center;
        let n = if d.norm() > 0.0 {
            d.normalize()
        } else {
            Vec2::new(1.0, 0.0)
        };
        (0.0, n)
    });
    Contact {
        distance: -(overlap + a.radius + b.radius),
        normal,
        point: b.support_mid(&normal) + normal * b.radius,
    }
}

/// Closed-region intersection test; touching counts as colliding.
pub fn convex_collide(a: &Convex, b: &Convex) -> bool {
    let reach = a.bound + b.bound;
    if (a.center - b.center).norm_squared() > reach * reach {
        return false;
    }
    contact(a, b).distance <= 0.0
}

/// Penetration depth and separating normal (from `b` towards `a`). Returns
/// zero depth when the regions do not overlap.
pub fn convex_penetration(a: &Convex, b: &Convex) -> (f64, Vec2) {
    let reach = a.bound + b.bound;
    let d = a.center - b.center;
    if d.norm_squared() > reach * reach {
        let n = d.normalize();
        return (0.0, n);
    }
    let c = contact(a, b);
    (c.depth(), c.normal)
}

pub fn collide(shape_a: &Shape, pose_a: &Pose2, shape_b: &Shape, pose_b: &Pose2) -> bool {
    convex_collide(&shape_a.to_convex(pose_a), &shape_b.to_convex(pose_b))
}

pub fn penetration_depth(
    shape_a: &Shape,
    pose_a: &Pose2,
    shape_b: &Shape,
    pose_b: &Pose2,
) -> (f64, Vec2) {
    convex_penetration(&shape_a.to_convex(pose_a), &shape_b.to_convex(pose_b))
}

/// Point containment for a rounded core; used by tests and rendering checks.
pub fn contains_point(c: &Convex, p: &Vec2) -> bool {
    let probe = Convex::disc(*p, 0.0);
    contact(&probe, c).distance <= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
        if rng.random_bool(0.5) {
            Shape::disc(rng.random_range(0.05..0.6))
        } else {
            let n = rng.random_range(3..7);
            let r = rng.random_range(0.1..0.6);
            let phase = rng.random_range(0.0..1.0);
            let vertices = (0..n)
                .map(|i| {
                    let a = 2.0 * PI * (i as f64 + phase) / n as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            Shape::Polygon { vertices }
        }
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose2 {
        Pose2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
        for k in -20..20 {
            let a = wrap_angle(0.1 * k as f64 * 7.3);
            assert!(a > -PI && a <= PI);
            assert_eq!(wrap_angle(a), a);
        }
    }

    #[test]
    fn disc_pairs() {
        let d = Shape::disc(1.0);
        let o = Pose2::identity();
        assert!(collide(&d, &o, &d, &Pose2::new(1.9, 0.0, 0.0)));
        assert!(!collide(&d, &o, &d, &Pose2::new(2.1, 0.0, 0.0)));
        assert!(collide(&d, &o, &d, &Pose2::new(2.0, 0.0, 0.0)));
    }

    #[test]
    fn disc_disc_penetration() {
        let d = Shape::disc(1.0);
        let (depth, n) = penetration_depth(&d, &Pose2::identity(), &d, &Pose2::new(1.5, 0.0, 0.0));
        assert!((depth - 0.5).abs() < 1e-12);
        assert!((n - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
        let (depth, _) = penetration_depth(&d, &Pose2::identity(), &d, &Pose2::new(2.5, 0.0, 0.0));
        assert_eq!(depth, 0.0);
    }

    #[test]
    fn disc_vs_square_matches_sampling_oracle() {
        let disc = Shape::disc(0.5);
        let square = Shape::square(1.0);
        let pa = Pose2::identity();
        // Oracle: sample the disc's area, test containment in the square.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cx in [1.2, 0.95, 0.75, 0.5] {
            let pb = Pose2::new(cx, 0.0, 0.0);
            let mut hit = false;
            for _ in 0..100_000 {
                let r = 0.5 * rng.random_range(0.0f64..1.0).sqrt();
                let a = rng.random_range(0.0..2.0 * PI);
                let (x, y) = (r * a.cos(), r * a.sin());
                if (x - cx).abs() <= 0.5 && y.abs() <= 0.5 {
                    hit = true;
                    break;
                }
            }
            assert_eq!(collide(&disc, &pa, &square, &pb), hit, "square at {cx}");
            assert_eq!(hit, cx < 1.0);
        }
    }

    #[test]
    fn disc_vs_polygon_separation_round_trip() {
        let disc = Shape::disc(0.3);
        let square = Shape::square(1.0);
        let pb = Pose2::new(0.0, 0.0, 0.4);
        let pa = Pose2::new(0.55, 0.2, 0.0);
        let (depth, n) = penetration_depth(&disc, &pa, &square, &pb);
        assert!(depth > 0.0);
        let moved = Pose2::new(pa.x + n.x * (depth + 1e-9), pa.y + n.y * (depth + 1e-9), 0.0);
        assert!(!collide(&disc, &moved, &square, &pb));
    }

    #[test]
    fn polygon_validation() {
        assert!(Shape::square(0.1).validate().is_ok());
        assert_eq!(
            Shape::disc(0.0).validate(),
            Err(ShapeError::NonPositiveRadius(0.0))
        );
        let cw = Shape::Polygon {
            vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],
        };
        assert_eq!(cw.validate(), Err(ShapeError::NotConvexCcw));
        let two = Shape::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0]],
        };
        assert_eq!(two.validate(), Err(ShapeError::TooFewVertices(2)));
    }

    #[test]
    fn collide_symmetric_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (sa, sb) = (random_shape(&mut rng), random_shape(&mut rng));
            let (pa, pb) = (random_pose(&mut rng), random_pose(&mut rng));
            assert_eq!(collide(&sa, &pa, &sb, &pb), collide(&sb, &pb, &sa, &pa));
        }
    }

    #[test]
    fn penetration_consistent_and_separating() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut overlapping = 0;
        for _ in 0..1000 {
            let (sa, sb) = (random_shape(&mut rng), random_shape(&mut rng));
            let (pa, pb) = (random_pose(&mut rng), random_pose(&mut rng));
            let (depth, n) = penetration_depth(&sa, &pa, &sb, &pb);
            assert!(depth >= 0.0);
            assert_eq!(depth > 0.0, collide(&sa, &pa, &sb, &pb));
            if depth > 0.0 {
                overlapping += 1;
                let shifted = Pose2 {
                    x: pa.x + n.x * depth,
                    y: pa.y + n.y * depth,
                    theta: pa.theta,
                };
                let (rest, _) = penetration_depth(&sa, &shifted, &sb, &pb);
                assert!(rest <= 1e-9, "residual {rest}");
            }
        }
        assert!(overlapping > 100);
    }

    #[test]
    fn capsules_collinear_segments_do_not_collide_when_apart() {
        let a = Convex::capsule(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 0.01);
        let b = Convex::capsule(Vec2::new(1.5, 0.0), Vec2::new(2.5, 0.0), 0.01);
        assert!(!convex_collide(&a, &b));
        let c = Convex::capsule(Vec2::new(0.5, -1.0), Vec2::new(0.5, 1.0), 0.01);
        assert!(convex_collide(&a, &c));
    }
}
