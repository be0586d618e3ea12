//! Small planar vector type and line helpers shared by every module.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counterclockwise quarter turn: `(x, y) -> (-y, x)`.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Clockwise quarter turn, the inverse of [`Vec2::perp`].
    pub fn perp_cw(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        self / self.norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A line `{ p : p . normal = offset }` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub normal: Vec2,
    pub offset: f64,
}

impl Line {
    pub fn through(point: Vec2, direction: Vec2) -> Self {
        let normal = direction.normalized().perp();
        Line {
            normal,
            offset: point.dot(normal),
        }
    }

    pub fn shifted(self, h: f64) -> Self {
        Line {
            normal: self.normal,
            offset: self.offset + h,
        }
    }

    pub fn signed_distance(&self, p: Vec2) -> f64 {
        p.dot(self.normal) - self.offset
    }

    /// Intersection point, or `None` when the lines are parallel to within `tol`
    /// (measured as the sine of the angle between them).
    pub fn intersect(&self, other: &Line, tol: f64) -> Option<Vec2> {
        let det = self.normal.cross(other.normal);
        if det.abs() <= tol {
            return None;
        }
        let x = (self.offset * other.normal.y - other.offset * self.normal.y) / det;
        let y = (self.normal.x * other.offset - other.normal.x * self.offset) / det;
        Some(Vec2::new(x, y))
    }
}

/// Closest point of segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn project_to_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (a + d * t, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentHit {
    None,
    Point(Vec2),
    /// Collinear overlap between the two given points.
    Overlap(Vec2, Vec2),
}

/// Intersection of two closed segments. `tol` is an absolute length tolerance.
pub fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2, tol: f64) -> SegmentHit {
    let da = a1 - a0;
    let db = b1 - b0;
    let denom = da.cross(db);
    let la = da.norm();
    let lb = db.norm();
    if denom.abs() <= 1e-12 * la * lb {
        // parallel: check collinearity
        if la == 0.0 {
            let (q, _) = project_to_segment(a0, b0, b1);
            return if q.dist(a0) <= tol {
                SegmentHit::Point(a0)
            } else {
                SegmentHit::None
            };
        }
        let dir = da / la;
        let off = (b0 - a0).cross(dir).abs();
        if off > tol {
            return SegmentHit::None;
        }
        let s0 = (b0 - a0).dot(dir);
        let s1 = (b1 - a0).dot(dir);
        let lo = s0.min(s1).max(0.0);
        let hi = s0.max(s1).min(la);
        if hi < lo - tol {
            return SegmentHit::None;
        }
        if hi - lo <= tol {
            let m = 0.5 * (lo + hi);
            return SegmentHit::Point(a0 + dir * m.clamp(0.0, la));
        }
        return SegmentHit::Overlap(a0 + dir * lo, a0 + dir * hi);
    }
    let w = b0 - a0;
    let t = w.cross(db) / denom;
    let u = w.cross(da) / denom;
    let ta = tol / la.max(f64::MIN_POSITIVE);
    let tb = tol / lb.max(f64::MIN_POSITIVE);
    if t < -ta || t > 1.0 + ta || u < -tb || u > 1.0 + tb {
        return SegmentHit::None;
    }
    SegmentHit::Point(a0 + da * t.clamp(0.0, 1.0))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perp_turns_counterclockwise() {
        assert_eq!(Vec2::new(1.0, 0.0).perp(), Vec2::new(0.0, 1.0));
        assert_eq!(Vec2::new(1.0, 0.0).perp_cw(), Vec2::new(0.0, -1.0));
    }

    #[test]
    fn line_intersection() {
        let a = Line::through(Vec2::ZERO, Vec2::new(1.0, 0.0));
        let b = Line::through(Vec2::new(2.0, -1.0), Vec2::new(0.0, 1.0));
        let p = a.intersect(&b, 1e-12).unwrap();
        assert!(p.dist(Vec2::new(2.0, 0.0)) < 1e-15);
        assert!(a.intersect(&a.shifted(1.0), 1e-12).is_none());
    }

    #[test]
    fn segments() {
        let hit = segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            1e-12,
        );
        assert_eq!(hit, SegmentHit::Point(Vec2::new(1.0, 0.0)));
        let hit = segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(3.0, 0.0),
            1e-12,
        );
        assert_eq!(
            hit,
            SegmentHit::Overlap(Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0))
        );
        let hit = segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            1e-12,
        );
        assert_eq!(hit, SegmentHit::None);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }
}
