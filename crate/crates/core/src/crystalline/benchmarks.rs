//! Reference configurations with closed-form crystalline curvature: a triod under the
//! regular octagon, a theta-shaped network under the regular hexagon, and a
//! T-junction of three hexagonal anisotropies.

use crate::anisotropy::{Anisotropy, CrystallinePolytope};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::network::{Curve, CurveEnd, End, Junction, Network};
use std::f64::consts::SQRT_2;

/// Regular octagon of side 1 with an edge normal along `+x`.
pub fn octagon() -> CrystallinePolytope {
    CrystallinePolytope::regular(8, 1.0, 0.0).expect("valid octagon")
}

/// Regular hexagon of side 1 with vertical sides (a vertex on top).
pub fn hexagon() -> CrystallinePolytope {
    CrystallinePolytope::regular(6, 1.0, 0.0).expect("valid hexagon")
}

fn check_lengths(lengths: &[f64]) -> Result<()> {
    if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::Precondition(format!(
            "segment lengths must be positive, got {lengths:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriodClosedForm {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Unconstrained minimizer `-beta / (2 alpha)`.
    pub vertex: f64,
    /// Minimizer over the admissible interval.
    pub x_min: f64,
    pub stable: bool,
}

/// Admissible range of the junction offset on the first segment's Wulff edge.
pub const TRIOD_RANGE: (f64, f64) = (1.0 - 1.0 / SQRT_2, 1.0 / SQRT_2);

/// Curvature energy `alpha x^2 + beta x + gamma` (divided by the common `phi°`) of the
/// octagon triod, its minimizer, and the stability test.
pub fn closed_form_triod(lengths: [f64; 3]) -> Result<TriodClosedForm> {
    check_lengths(&lengths)?;
    let [l1, l2, l3] = lengths;
    let alpha = 1.0 / l1 + 1.0 / (2.0 * l2) + 1.0 / (2.0 * l3);
    let beta = 1.0 / (SQRT_2 * l3) - (SQRT_2 + 1.0) / (SQRT_2 * l2);
    let gamma = (3.0 + 2.0 * SQRT_2) / (4.0 * l2) + 1.0 / (4.0 * l3);
    let vertex = -beta / (2.0 * alpha);
    let x_min = vertex.clamp(TRIOD_RANGE.0, TRIOD_RANGE.1);
    let stable = (SQRT_2 - 1.0) / l1 + 1.0 / (SQRT_2 * l3) < 1.0 / l2
        && 1.0 / l2 < SQRT_2 / l1 + SQRT_2 / l3;
    Ok(TriodClosedForm {
        alpha,
        beta,
        gamma,
        vertex,
        x_min,
        stable,
    })
}

/// Triod of three segments leaving the origin along Wulff-edge directions of the
/// octagon, each continued by a half-line.
///
/// Curve `i` is `S_i` followed by `L_i`; the junction offset `x` is the position of
/// the first curve's field value on its Wulff edge.
pub fn octagon_triod(lengths: [f64; 3]) -> Result<(Network, Vec<Anisotropy>)> {
    check_lengths(&lengths)?;
    let deg = |a: f64| Vec2::from_angle(a.to_radians());
    // segment normals select octagon edges 0, 3, 5; half-line normals select the
    // vertices closing those edges
    let segment_normals = [0.0, -135.0, 135.0];
    let ray_normals = [22.5, -157.5, 157.5];
    let mut curves = Vec::with_capacity(3);
    for i in 0..3 {
        let tau = deg(segment_normals[i]).perp_cw();
        let ray = deg(ray_normals[i]).perp_cw();
        curves.push(
            Curve::polyline(format!("S{}", i + 1), 0, vec![Vec2::ZERO, tau * lengths[i]])
                .with_halfline(ray),
        );
    }
    let junctions = vec![Junction {
        point: Vec2::ZERO,
        ends: (0..3)
            .map(|curve| CurveEnd {
                curve,
                end: End::Start,
            })
            .collect(),
    }];
    Ok((
        Network::new(curves, junctions)?,
        vec![Anisotropy::Crystalline(octagon())],
    ))
}

/// Side lengths of the theta network: five sides of each hexagon from the lower
/// junction `P` to the upper junction `Q`, and the shared side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaLengths {
    pub left: [f64; 5],
    pub middle: f64,
    pub right: [f64; 5],
}

impl ThetaLengths {
    pub fn unit() -> Self {
        ThetaLengths {
            left: [1.0; 5],
            middle: 1.0,
            right: [1.0; 5],
        }
    }

    /// Completes two hexagons from the shared side and the first three sides of each;
    /// `None` when a closing side would not be positive.
    pub fn close(middle: f64, left: [f64; 3], right: [f64; 3]) -> Option<Self> {
        let complete = |a: [f64; 3]| -> Option<[f64; 5]> {
            let a4 = middle + a[0] - a[2];
            let a5 = a[1] + a[2] - middle;
            (a4 > 0.0 && a5 > 0.0).then_some([a[0], a[1], a[2], a4, a5])
        };
        Some(ThetaLengths {
            left: complete(left)?,
            middle,
            right: complete(right)?,
        })
    }

    fn closure_gap(&self) -> f64 {
        let gap = |a: &[f64; 5]| {
            (a[3] - (self.middle + a[0] - a[2]))
                .abs()
                .max((a[4] - (a[1] + a[2] - self.middle)).abs())
        };
        gap(&self.left).max(gap(&self.right))
    }

    fn all(&self) -> Vec<f64> {
        let mut v = self.left.to_vec();
        v.push(self.middle);
        v.extend_from_slice(&self.right);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaClosedForm {
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
    pub a1: f64,
    pub a2: f64,
    pub a0: f64,
    pub x1: f64,
    pub x2: f64,
}

impl ThetaClosedForm {
    /// `a11 x1^2 + 2 a12 x1 x2 + a22 x2^2 + 2 a1 x1 + 2 a2 x2 + a0`.
    pub fn energy(&self, x1: f64, x2: f64) -> f64 {
        self.a11 * x1 * x1
            + 2.0 * self.a12 * x1 * x2
            + self.a22 * x2 * x2
            + 2.0 * self.a1 * x1
            + 2.0 * self.a2 * x2
            + self.a0
    }
}

/// Curvature energy of the hexagon theta network (divided by the common `phi°`) as a
/// quadratic in the two junction offsets, and its minimizer.
pub fn closed_form_theta(lengths: &ThetaLengths) -> Result<ThetaClosedForm> {
    check_lengths(&lengths.all())?;
    let inv = |l: f64| 1.0 / l;
    let (s1, s21, s3) = (&lengths.left, lengths.middle, &lengths.right);
    let a11 = inv(s1[0]) + inv(s21) + inv(s3[0]);
    let a22 = inv(s1[4]) + inv(s21) + inv(s3[4]);
    let a12 = -inv(s21);
    let a1 = -inv(s1[0]);
    let a2 = -inv(s3[4]);
    let a0 = (1..4).map(|j| inv(s1[j]) + inv(s3[j])).sum::<f64>() + inv(s1[0]) + inv(s3[4]);
    let det = a11 * a22 - a12 * a12;
    let x1 = (a12 * a2 - a22 * a1) / det;
    let x2 = (a12 * a1 - a11 * a2) / det;
    if !(x1 > 0.0 && x1 < 1.0 && x2 > 0.0 && x2 < 1.0) {
        return Err(Error::Consistency(format!(
            "theta minimizer ({x1}, {x2}) is outside the open unit square"
        )));
    }
    Ok(ThetaClosedForm {
        a11,
        a22,
        a12,
        a1,
        a2,
        a0,
        x1,
        x2,
    })
}

/// Two hexagons with sides parallel to those of [`hexagon`] sharing a vertical side.
///
/// Curves: 0 runs clockwise around the left hexagon from `P` to `Q`, 1 is the shared
/// side from `P` up to `Q`, 2 runs counterclockwise around the right hexagon. Junction
/// 0 is `P`, junction 1 is `Q`.
pub fn hexagon_theta(lengths: &ThetaLengths) -> Result<(Network, Vec<Anisotropy>)> {
    check_lengths(&lengths.all())?;
    let gap = lengths.closure_gap();
    if gap > 1e-9 * lengths.all().iter().fold(1.0, |m: f64, v| m.max(*v)) {
        return Err(Error::InvalidNetwork(format!(
            "side lengths do not close two hexagons (gap {gap:e})"
        )));
    }
    let p = Vec2::new(0.0, -0.5 * lengths.middle);
    let q = Vec2::new(0.0, 0.5 * lengths.middle);
    let walk = |angles: [f64; 5], sides: &[f64; 5]| {
        let mut pts = vec![p];
        let mut cur = p;
        for (a, l) in angles.iter().zip(sides) {
            cur = cur + Vec2::from_angle(a.to_radians()) * *l;
            pts.push(cur);
        }
        *pts.last_mut().expect("nonempty") = q;
        pts
    };
    let left = walk([210.0, 150.0, 90.0, 30.0, -30.0], &lengths.left);
    let right = walk([-30.0, 30.0, 90.0, 150.0, 210.0], &lengths.right);
    let curves = vec![
        Curve::polyline("S1", 0, left),
        Curve::polyline("S2", 0, vec![p, q]),
        Curve::polyline("S3", 0, right),
    ];
    let junctions = vec![
        Junction {
            point: p,
            ends: (0..3)
                .map(|curve| CurveEnd {
                    curve,
                    end: End::Start,
                })
                .collect(),
        },
        Junction {
            point: q,
            ends: [1, 0, 2]
                .iter()
                .map(|&curve| CurveEnd {
                    curve,
                    end: End::End,
                })
                .collect(),
        },
    ];
    Ok((
        Network::new(curves, junctions)?,
        vec![Anisotropy::Crystalline(hexagon())],
    ))
}

/// T-junction of three hexagonal anisotropies: a vertical segment going down under a
/// hexagon with vertical sides, and two horizontal segments under hexagons with
/// horizontal sides. The balance forces the first value to the midpoint of its edge.
/// `tilt` (radians) rotates the vertical segment counterclockwise; any tilt below 60
/// degrees moves its normal off the Wulff edge normal and leaves no admissible field.
pub fn three_hexagon_junction(tilt: f64) -> Result<(Network, Vec<Anisotropy>)> {
    let deg = |a: f64| Vec2::from_angle(a.to_radians());
    let specs = [
        (
            0usize,
            Vec2::from_angle(tilt),
            Vec2::from_angle(tilt - 15f64.to_radians()),
        ),
        (1usize, deg(90.0), deg(75.0)),
        (2usize, deg(-90.0), deg(-105.0)),
    ];
    let curves = specs
        .iter()
        .map(|&(a, nu, ray_nu)| {
            let tau = nu.perp_cw();
            Curve::polyline(format!("S{}", a + 1), a, vec![Vec2::ZERO, tau])
                .with_halfline(ray_nu.normalized().perp_cw())
        })
        .collect();
    let junctions = vec![Junction {
        point: Vec2::ZERO,
        ends: (0..3)
            .map(|curve| CurveEnd {
                curve,
                end: End::Start,
            })
            .collect(),
    }];
    let flat = CrystallinePolytope::regular(6, 1.0, 30f64.to_radians())?;
    Ok((
        Network::new(curves, junctions)?,
        vec![
            Anisotropy::Crystalline(hexagon()),
            Anisotropy::Crystalline(flat.clone()),
            Anisotropy::Crystalline(flat),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_triod_is_unstable() {
        let c = closed_form_triod([1.0, 1.0, 1.0]).unwrap();
        assert!(!c.stable);
        assert!((c.vertex - 0.25).abs() < 1e-15);
        assert_eq!(c.x_min, TRIOD_RANGE.0);
        // left side of the stability test: (sqrt2 - 1) + 1/sqrt2 = 1.1213... > 1
        assert!((SQRT_2 - 1.0) + 1.0 / SQRT_2 > 1.0);
    }

    #[test]
    fn stable_triod_minimizer_is_interior() {
        let c = closed_form_triod([1.0, 0.55, 1.0]).unwrap();
        assert!(c.stable);
        assert!(c.x_min > TRIOD_RANGE.0 && c.x_min < TRIOD_RANGE.1);
        assert_eq!(c.x_min, c.vertex);
    }

    #[test]
    fn theta_unit_minimizer() {
        let c = closed_form_theta(&ThetaLengths::unit()).unwrap();
        assert_eq!(
            (c.a11, c.a22, c.a12, c.a1, c.a2),
            (3.0, 3.0, -1.0, -1.0, -1.0)
        );
        assert!((c.x1 - 0.5).abs() < 1e-15 && (c.x2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_geometry_closes() {
        let l = ThetaLengths::close(1.3, [0.7, 1.1, 0.9], [1.2, 0.8, 1.0]).unwrap();
        let (net, _) = hexagon_theta(&l).unwrap();
        assert!(net.validate().is_valid(), "{:?}", net.validate().violations);
        assert_eq!(net.segment_count(), 11);
    }

    #[test]
    fn rejects_nonpositive_lengths() {
        assert!(closed_form_triod([1.0, 0.0, 1.0]).is_err());
        assert!(octagon_triod([1.0, -1.0, 1.0]).is_err());
    }
}
