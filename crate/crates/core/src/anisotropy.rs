//! Anisotropies: smooth norms given by their angular profile on the unit circle,
//! and crystalline norms given by their Wulff polygon.
//!
//! Conventions: `phi` measures tangent vectors and has the Wulff shape `B_phi` as its
//! unit ball; the dual `phi°` measures normals. A smooth anisotropy is described by
//! `psi(theta) = phi°(cos theta, sin theta)` together with `psi'` and `psi''`.
//! A crystalline anisotropy stores the vertices of `B_phi` in clockwise order, so
//! that the outward normal of every edge is the counterclockwise quarter turn of its
//! tangent.

use crate::error::{Error, Result};
use crate::geometry::{segment_intersection, SegmentHit, Vec2};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

/// Tolerance on `|nu| - 1` accepted by functions taking unit normals.
pub const UNIT_TOL: f64 = 1e-9;

type ProfileFn = dyn Fn(f64) -> [f64; 3] + Send + Sync;

#[derive(Clone)]
enum Profile {
    /// `psi = base + amp * cos(freq * (theta - phase))`
    Cosine {
        base: f64,
        amp: f64,
        freq: f64,
        phase: f64,
    },
    Custom(Arc<ProfileFn>),
}

/// Smooth elliptic anisotropy described by its dual on the unit circle.
#[derive(Clone)]
pub struct SmoothAnisotropy {
    profile: Profile,
    min_psi: f64,
    min_stiffness: f64,
}

impl fmt::Debug for SmoothAnisotropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.profile {
            Profile::Cosine {
                base,
                amp,
                freq,
                phase,
            } => f
                .debug_struct("SmoothAnisotropy")
                .field("base", base)
                .field("amp", amp)
                .field("freq", freq)
                .field("phase", phase)
                .finish(),
            Profile::Custom(_) => f.write_str("SmoothAnisotropy(custom)"),
        }
    }
}

const ELLIPTICITY_SAMPLES: usize = 4096;

impl SmoothAnisotropy {
    /// `psi(theta) = base + amp * cos(freq * theta)`.
    pub fn cosine(base: f64, amp: f64, freq: f64) -> Result<Self> {
        Self::cosine_with_phase(base, amp, freq, 0.0)
    }

    pub fn cosine_with_phase(base: f64, amp: f64, freq: f64, phase: f64) -> Result<Self> {
        if ![base, amp, freq, phase].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("cosine anisotropy parameters"));
        }
        if freq != freq.round() {
            return Err(Error::InvalidAnisotropy(format!(
                "frequency {freq} must be an integer for a periodic profile"
            )));
        }
        Self::build(Profile::Cosine {
            base,
            amp,
            freq,
            phase,
        })
    }

    /// `phi° = scale * |.|`.
    pub fn euclidean(scale: f64) -> Result<Self> {
        Self::cosine(scale, 0.0, 0.0)
    }

    /// Profile supplied as a closure returning `[psi, psi', psi'']` at an angle.
    pub fn from_profile<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> [f64; 3] + Send + Sync + 'static,
    {
        Self::build(Profile::Custom(Arc::new(f)))
    }

    fn build(profile: Profile) -> Result<Self> {
        let mut a = SmoothAnisotropy {
            profile,
            min_psi: 0.0,
            min_stiffness: 0.0,
        };
        let (min_psi, min_stiffness) = a.sample_bounds(ELLIPTICITY_SAMPLES);
        if !(min_psi > 0.0) {
            return Err(Error::InvalidAnisotropy(format!(
                "profile is not positive (min psi = {min_psi})"
            )));
        }
        if !(min_stiffness > 0.0) {
            return Err(Error::InvalidAnisotropy(format!(
                "profile is not elliptic (min psi + psi'' = {min_stiffness})"
            )));
        }
        a.min_psi = min_psi;
        a.min_stiffness = min_stiffness;
        Ok(a)
    }

    fn sample_bounds(&self, n: usize) -> (f64, f64) {
        (0..n)
            .map(|k| self.profile(TAU * k as f64 / n as f64))
            .fold((f64::INFINITY, f64::INFINITY), |(mp, ms), [p, _, p2]| {
                (mp.min(p), ms.min(p + p2))
            })
    }

    /// `[psi, psi', psi'']` at `theta`.
    pub fn profile(&self, theta: f64) -> [f64; 3] {
        match &self.profile {
            Profile::Cosine {
                base,
                amp,
                freq,
                phase,
            } => {
                let a = freq * (theta - phase);
                let (s, c) = a.sin_cos();
                [base + amp * c, -amp * freq * s, -amp * freq * freq * c]
            }
            Profile::Custom(f) => f(theta),
        }
    }

    pub fn psi(&self, theta: f64) -> f64 {
        self.profile(theta)[0]
    }

    pub fn psi_d1(&self, theta: f64) -> f64 {
        self.profile(theta)[1]
    }

    pub fn psi_d2(&self, theta: f64) -> f64 {
        self.profile(theta)[2]
    }

    /// Lower bound of `psi` on the sampling grid used at construction.
    pub fn min_psi(&self) -> f64 {
        self.min_psi
    }

    /// Lower bound of `psi + psi''` on the sampling grid used at construction.
    pub fn ellipticity(&self) -> f64 {
        self.min_stiffness
    }

    pub fn dual_value(&self, xi: Vec2) -> f64 {
        let r = xi.norm();
        if r == 0.0 {
            return 0.0;
        }
        r * self.psi(xi.angle())
    }

    /// `grad phi°(nu) = psi nu + psi' nu^perp` for a unit normal.
    pub fn dual_gradient(&self, nu: Vec2) -> Result<Vec2> {
        check_unit(nu)?;
        let [p, p1, _] = self.profile(nu.angle());
        Ok(nu * p + nu.perp() * p1)
    }

    /// `hess phi°(nu) tau . tau = psi + psi''` for a unit normal `nu` and `tau` orthogonal to it.
    pub fn stiffness(&self, nu: Vec2) -> f64 {
        let [p, _, p2] = self.profile(nu.angle());
        p + p2
    }

    /// Mobility-free speed factor `phi°(nu) (hess phi°(nu) tau . tau)` of the special flow.
    pub fn flow_coefficient(&self, nu: Vec2) -> f64 {
        let [p, _, p2] = self.profile(nu.angle());
        p * (p + p2)
    }

    /// Gradient and Hessian of `xi -> phi°(xi)` at a nonzero vector.
    pub fn dual_gradient_hessian(&self, xi: Vec2) -> (Vec2, [[f64; 2]; 2]) {
        let r = xi.norm();
        let nu = xi / r;
        let [p, p1, p2] = self.profile(nu.angle());
        let t = nu.perp();
        let g = nu * p + t * p1;
        let k = (p + p2) / r;
        (
            g,
            [
                [k * t.x * t.x, k * t.x * t.y],
                [k * t.y * t.x, k * t.y * t.y],
            ],
        )
    }
}

fn check_unit(nu: Vec2) -> Result<()> {
    if !nu.is_finite() {
        return Err(Error::NonFinite("normal"));
    }
    let n = nu.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit(n));
    }
    Ok(())
}

/// One edge of a Wulff polygon, traversed clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WulffEdge {
    pub start: Vec2,
    pub end: Vec2,
    /// Unit tangent in the clockwise direction.
    pub tangent: Vec2,
    /// Outward unit normal, equal to `tangent.perp()`.
    pub normal: Vec2,
    pub length: f64,
    /// Distance from the origin to the edge line.
    pub support: f64,
}

impl WulffEdge {
    pub fn point_at(&self, offset: f64) -> Vec2 {
        self.start + self.tangent * offset
    }
}

/// A point of the Wulff boundary as (edge index, clockwise arclength offset from the
/// edge start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub edge: usize,
    pub offset: f64,
}

/// Face of the Wulff shape selected by a normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// The vertex with this index (start of edge `i`).
    Vertex(usize),
    Edge(usize),
}

/// Convex Wulff polygon of a crystalline anisotropy.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystallinePolytope {
    vertices: Vec<Vec2>,
    edges: Vec<WulffEdge>,
    even: bool,
    diameter: f64,
}

impl CrystallinePolytope {
    /// Builds a Wulff polygon from its vertices, given in either orientation.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidAnisotropy(format!(
                "a Wulff polygon needs at least 3 vertices, got {n}"
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Wulff vertices"));
        }
        let area2: f64 = (0..n)
            .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
            .sum();
        let mut vertices = vertices;
        if area2 > 0.0 {
            vertices.reverse();
        }
        let diameter = vertices
            .iter()
            .flat_map(|a| vertices.iter().map(move |b| a.dist(*b)))
            .fold(0.0, f64::max);
        if !(diameter > 0.0) {
            return Err(Error::InvalidAnisotropy("degenerate polygon".into()));
        }
        let tol = 1e-9 * diameter;
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let length = a.dist(b);
            if length <= tol {
                return Err(Error::InvalidAnisotropy(format!(
                    "vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
            let tangent = (b - a) / length;
            let normal = tangent.perp();
            let support = a.dot(normal);
            if support <= tol {
                return Err(Error::InvalidAnisotropy(
                    "origin is not strictly inside the polygon".into(),
                ));
            }
            edges.push(WulffEdge {
                start: a,
                end: b,
                tangent,
                normal,
                length,
                support,
            });
        }
        for i in 0..n {
            let turn = edges[i].tangent.cross(edges[(i + 1) % n].tangent);
            // clockwise traversal turns right at every vertex
            if turn >= -1e-12 {
                return Err(Error::InvalidAnisotropy(format!(
                    "polygon is not strictly convex at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        let even =
            n % 2 == 0 && (0..n / 2).all(|i| (vertices[i] + vertices[i + n / 2]).norm() <= tol);
        Ok(CrystallinePolytope {
            vertices,
            edges,
            even,
            diameter,
        })
    }

    /// Regular `n`-gon with side length `side`. Edge `k` has outward normal at angle
    /// `rotation - 2 pi k / n`; vertex `k` is the clockwise start of edge `k`.
    pub fn regular(n: usize, side: f64, rotation: f64) -> Result<Self> {
        if n < 3 || !(side > 0.0) {
            return Err(Error::InvalidAnisotropy(format!(
                "regular polygon needs n >= 3 and positive side (n = {n}, side = {side})"
            )));
        }
        let circumradius = side / (2.0 * (PI / n as f64).sin());
        let vertices = (0..n)
            .map(|k| {
                Vec2::from_angle(rotation - TAU * k as f64 / n as f64 + PI / n as f64)
                    * circumradius
            })
            .collect();
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> &[WulffEdge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &WulffEdge {
        &self.edges[i % self.edges.len()]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Absolute tolerance for boundary membership.
    pub fn boundary_tolerance(&self) -> f64 {
        1e-9 * self.diameter
    }

    /// `phi(x)`, the gauge of the polygon.
    pub fn gauge(&self, x: Vec2) -> f64 {
        self.edges
            .iter()
            .map(|e| x.dot(e.normal) / e.support)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    /// `phi°(xi) = max over vertices of xi . v`.
    pub fn dual_value(&self, xi: Vec2) -> f64 {
        self.vertices
            .iter()
            .map(|v| xi.dot(*v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Face of `B_phi` where `v . nu` is maximal: an edge when `nu` is (numerically)
    /// its outward normal, otherwise a single vertex.
    pub fn subdifferential(&self, nu: Vec2) -> Result<Face> {
        if !nu.is_finite() || nu.norm() == 0.0 {
            return Err(Error::NonFinite("normal"));
        }
        let nu = nu.normalized();
        let n = self.len();
        let scores: Vec<f64> = self.vertices.iter().map(|v| v.dot(nu)).collect();
        let best = (0..n)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("nonempty polygon");
        let tol = self.boundary_tolerance();
        let next = (best + 1) % n;
        let prev = (best + n - 1) % n;
        if scores[best] - scores[next] <= tol {
            Ok(Face::Edge(best))
        } else if scores[best] - scores[prev] <= tol {
            Ok(Face::Edge(prev))
        } else {
            Ok(Face::Vertex(best))
        }
    }

    /// The subdifferential of `phi°` at `nu` as a segment `(start, end)`; both ends
    /// coincide when it is a single vertex.
    pub fn subdifferential_segment(&self, nu: Vec2) -> Result<(Vec2, Vec2)> {
        Ok(match self.subdifferential(nu)? {
            Face::Vertex(i) => (self.vertices[i], self.vertices[i]),
            Face::Edge(i) => (self.edges[i].start, self.edges[i].end),
        })
    }

    pub fn point(&self, p: BoundaryPoint) -> Vec2 {
        self.edge(p.edge).point_at(p.offset)
    }

    /// Boundary coordinate of a point on `∂B_phi`. Vertices are reported as offset 0
    /// of the edge they start.
    pub fn locate(&self, x: Vec2) -> Result<BoundaryPoint> {
        if !x.is_finite() {
            return Err(Error::NonFinite("boundary point"));
        }
        let g = self.gauge(x);
        if (g - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnBoundary(g));
        }
        let mut best = (
            f64::INFINITY,
            BoundaryPoint {
                edge: 0,
                offset: 0.0,
            },
        );
        for (i, e) in self.edges.iter().enumerate() {
            let s = (x - e.start).dot(e.tangent).clamp(0.0, e.length);
            let d = e.point_at(s).dist(x);
            if d < best.0 {
                best = (d, BoundaryPoint { edge: i, offset: s });
            }
        }
        Ok(self.canonical(best.1))
    }

    fn canonical(&self, p: BoundaryPoint) -> BoundaryPoint {
        let e = self.edge(p.edge);
        let tol = self.boundary_tolerance();
        if p.offset >= e.length - tol {
            BoundaryPoint {
                edge: (p.edge + 1) % self.len(),
                offset: 0.0,
            }
        } else if p.offset <= tol {
            BoundaryPoint {
                edge: p.edge % self.len(),
                offset: 0.0,
            }
        } else {
            p
        }
    }

    /// All unordered pairs `{Y, Z}` on `∂B_phi` with `X + Y + Z = 0`.
    ///
    /// Finite solutions are listed in `pairs`; when an edge of `B_phi` parallel to `X`
    /// is longer than `|X|` the solutions form continuous families, listed in
    /// `families` as the range swept by `Y` (with `Z = -X - Y`).
    pub fn solve_triplet(&self, x: Vec2) -> Result<TripletSolutions> {
        if !self.even {
            return Err(Error::InvalidAnisotropy(
                "admissible triplets require an even Wulff polygon".into(),
            ));
        }
        let g = self.gauge(x);
        if !x.is_finite() || (g - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnBoundary(g));
        }
        let tol = self.boundary_tolerance();
        // Y in ∂B with -X - Y in ∂B, i.e. (B even) Y in ∂B ∩ (∂B - X).
        let mut points: Vec<Vec2> = Vec::new();
        let mut overlaps: Vec<(Vec2, Vec2)> = Vec::new();
        for e in &self.edges {
            for f in &self.edges {
                match segment_intersection(e.start, e.end, f.start - x, f.end - x, tol) {
                    SegmentHit::None => {}
                    SegmentHit::Point(p) => points.push(p),
                    SegmentHit::Overlap(p, q) => overlaps.push((p, q)),
                }
            }
        }
        let mut fams: Vec<(Vec2, Vec2)> = Vec::new();
        for (p, q) in overlaps {
            if !fams.iter().any(|(a, b)| {
                (a.dist(p) <= tol && b.dist(q) <= tol) || (a.dist(q) <= tol && b.dist(p) <= tol)
            }) {
                fams.push((p, q));
            }
        }
        let on_family = |p: Vec2| {
            fams.iter().any(|(a, b)| {
                let (c, _) = crate::geometry::project_to_segment(p, *a, *b);
                c.dist(p) <= tol
            })
        };
        let mut uniq: Vec<Vec2> = Vec::new();
        for p in points {
            if on_family(p) || uniq.iter().any(|u| u.dist(p) <= 10.0 * tol) {
                continue;
            }
            uniq.push(p);
        }
        let mut pairs = Vec::new();
        let mut used = vec![false; uniq.len()];
        for i in 0..uniq.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let y = uniq[i];
            let z = -x - y;
            if let Some(j) = (0..uniq.len()).find(|&j| !used[j] && uniq[j].dist(z) <= 10.0 * tol) {
                used[j] = true;
            }
            pairs.push((self.locate_unchecked(y), self.locate_unchecked(z)));
        }
        // Each family appears twice (once as the Y-range, once as the Z-range).
        let mut families: Vec<TripletFamily> = Vec::new();
        for (p, q) in fams {
            let zp = -x - p;
            let zq = -x - q;
            let dup = families.iter().any(|f| {
                let (a, b) = (self.point(f.y_start), self.point(f.y_end));
                (a.dist(zq) <= 10.0 * tol && b.dist(zp) <= 10.0 * tol)
                    || (a.dist(zp) <= 10.0 * tol && b.dist(zq) <= 10.0 * tol)
            });
            if !dup {
                families.push(TripletFamily {
                    y_start: self.locate_unchecked(p),
                    y_end: self.locate_unchecked(q),
                });
            }
        }
        Ok(TripletSolutions { pairs, families })
    }

    fn locate_unchecked(&self, p: Vec2) -> BoundaryPoint {
        let mut best = (
            f64::INFINITY,
            BoundaryPoint {
                edge: 0,
                offset: 0.0,
            },
        );
        for (i, e) in self.edges.iter().enumerate() {
            let s = (p - e.start).dot(e.tangent).clamp(0.0, e.length);
            let d = e.point_at(s).dist(p);
            if d < best.0 {
                best = (d, BoundaryPoint { edge: i, offset: s });
            }
        }
        self.canonical(best.1)
    }
}

/// A segment of solutions: `Y` ranges between the two boundary points (on one edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletFamily {
    pub y_start: BoundaryPoint,
    pub y_end: BoundaryPoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletSolutions {
    pub pairs: Vec<(BoundaryPoint, BoundaryPoint)>,
    pub families: Vec<TripletFamily>,
}

impl TripletSolutions {
    pub fn is_unique(&self) -> bool {
        self.pairs.len() == 1 && self.families.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.families.is_empty()
    }
}

/// Either kind of anisotropy.
#[derive(Debug, Clone)]
pub enum Anisotropy {
    Smooth(SmoothAnisotropy),
    Crystalline(CrystallinePolytope),
}

impl Anisotropy {
    pub fn dual_value(&self, xi: Vec2) -> Result<f64> {
        if !xi.is_finite() {
            return Err(Error::NonFinite("dual_value argument"));
        }
        Ok(match self {
            Anisotropy::Smooth(s) => s.dual_value(xi),
            Anisotropy::Crystalline(c) => c.dual_value(xi),
        })
    }

    pub fn as_smooth(&self) -> Option<&SmoothAnisotropy> {
        match self {
            Anisotropy::Smooth(s) => Some(s),
            Anisotropy::Crystalline(_) => None,
        }
    }

    pub fn as_crystalline(&self) -> Option<&CrystallinePolytope> {
        match self {
            Anisotropy::Crystalline(c) => Some(c),
            Anisotropy::Smooth(_) => None,
        }
    }

    pub fn is_crystalline(&self) -> bool {
        matches!(self, Anisotropy::Crystalline(_))
    }
}

/// Largest violation of `phi_a° + phi_b° >= phi_c°` over all three orderings,
/// sampled at `samples` directions; `None` when the inequality holds everywhere.
pub fn triangle_inequality_violation(
    a: &Anisotropy,
    b: &Anisotropy,
    c: &Anisotropy,
    samples: usize,
) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let nu = Vec2::from_angle(TAU * k as f64 / samples as f64);
        let va = a.dual_value(nu).unwrap_or(f64::NAN);
        let vb = b.dual_value(nu).unwrap_or(f64::NAN);
        let vc = c.dual_value(nu).unwrap_or(f64::NAN);
        worst = worst.max(vc - va - vb).max(vb - va - vc).max(va - vb - vc);
    }
    (worst > 1e-12).then_some(worst)
}

/// Closed-form admissible-triplet geometry of a regular `n`-gon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletParams {
    pub n: usize,
    pub side: f64,
    pub theta_n: f64,
    pub delta: f64,
    pub c_bar: f64,
    pub q_y: f64,
    pub q_z: f64,
    /// Admissible range `[a, b]` of the offset `x`.
    pub interval_ab: (f64, f64),
}

impl TripletParams {
    pub fn new(n: usize, side: f64) -> Result<Self> {
        if n < 6 || n % 2 == 1 {
            return Err(Error::InvalidTripletParams(format!(
                "n must be even and at least 6, got {n}"
            )));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidTripletParams(format!(
                "side length must be positive, got {side}"
            )));
        }
        let l = side;
        let nf = n as f64;
        let theta_n = match n % 6 {
            0 => TAU / 3.0,
            2 => TAU / 3.0 * (1.0 + 1.0 / nf),
            _ => TAU / 3.0 * (1.0 - 1.0 / nf),
        };
        let delta = l / (2.0 * (1.0 - theta_n.cos()));
        let c_bar = -1.0 / (2.0 * theta_n.cos());
        let (q_y, q_z, interval_ab) = match n % 6 {
            0 => (0.0, l, (0.0, l)),
            2 => (-c_bar * delta, c_bar * (l - delta), (delta, l - delta)),
            _ => (
                l - c_bar * (l - delta),
                l + c_bar * delta,
                (delta, l - delta),
            ),
        };
        Ok(TripletParams {
            n,
            side,
            theta_n,
            delta,
            c_bar,
            q_y,
            q_z,
            interval_ab,
        })
    }

    /// Offsets `(y, z)` determined by `x`.
    pub fn partner_offsets(&self, x: f64) -> (f64, f64) {
        (self.c_bar * x + self.q_y, -self.c_bar * x + self.q_z)
    }

    /// Edges of `CrystallinePolytope::regular(n, side, 0)` carrying `X`, `Y` and `Z`.
    /// `x` and `y` are clockwise offsets from the start of their edges, `z` is measured
    /// from the clockwise end of its edge.
    pub fn designated_edges(&self) -> (usize, usize, usize) {
        let steps = (self.theta_n / (TAU / self.n as f64)).round() as usize;
        (0, steps, self.n - steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn square() -> CrystallinePolytope {
        CrystallinePolytope::new(vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
        ])
        .unwrap()
    }

    fn hexagon() -> CrystallinePolytope {
        // side 1, vertices at 90 + 60 k degrees
        CrystallinePolytope::new(
            (0..6)
                .map(|k| Vec2::from_angle((90.0 + 60.0 * k as f64).to_radians()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn dual_of_euclidean() {
        let e = Anisotropy::Smooth(SmoothAnisotropy::euclidean(1.0).unwrap());
        assert!((e.dual_value(Vec2::new(3.0, 4.0)).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn dual_of_square() {
        let sq = Anisotropy::Crystalline(square());
        assert_eq!(sq.dual_value(Vec2::new(1.0, 0.0)).unwrap(), 1.0);
        assert!(sq.dual_value(Vec2::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn dual_of_hexagon_matches_vertex_scan() {
        let h = hexagon();
        let xi = Vec2::new(1.0, 0.0);
        let brute = (0..6)
            .map(|k| xi.dot(Vec2::from_angle((90.0 + 60.0 * k as f64).to_radians())))
            .fold(f64::MIN, f64::max);
        assert!((h.dual_value(xi) - brute).abs() < 1e-15);
        assert!((brute - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn polygon_orientation_is_normalized() {
        let ccw = CrystallinePolytope::new(vec![
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
            Vec2::new(-1.0, -1.0),
        ])
        .unwrap();
        for e in ccw.edges() {
            assert!(e.tangent.cross(e.end) <= 0.0 || e.support > 0.0);
            assert!((e.normal - e.tangent.perp()).norm() < 1e-15);
            assert!((e.support - 1.0).abs() < 1e-15);
        }
        assert!(ccw.is_even());
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(CrystallinePolytope::new(vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]).is_err());
        // origin outside
        assert!(CrystallinePolytope::new(vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(2.0, 2.0),
        ])
        .is_err());
        // nonconvex
        assert!(CrystallinePolytope::new(vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(0.1, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(-1.0, -1.0),
            Vec2::new(-1.0, 1.0),
        ])
        .is_err());
        // repeated vertex
        assert!(CrystallinePolytope::new(vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 0.0),
            Vec2::new(1.0, -1.0),
        ])
        .is_err());
    }

    #[test]
    fn gauge_is_one_on_boundary() {
        let h = hexagon();
        for e in h.edges() {
            for s in [0.0, 0.3, 0.9] {
                assert!((h.gauge(e.point_at(s * e.length)) - 1.0).abs() < 1e-14);
            }
        }
        assert!((h.gauge(Vec2::new(0.0, 2.0)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn subdifferential_faces() {
        let sq = square();
        let (a, b) = sq.subdifferential_segment(Vec2::new(0.0, 1.0)).unwrap();
        let mut ends = [a, b];
        ends.sort_by(|p, q| p.x.total_cmp(&q.x));
        assert_eq!(ends, [Vec2::new(-1.0, 1.0), Vec2::new(1.0, 1.0)]);
        let (a, b) = sq
            .subdifferential_segment(Vec2::new(1.0, 1.0) / SQRT_2)
            .unwrap();
        assert_eq!(a, Vec2::new(1.0, 1.0));
        assert_eq!(a, b);

        let h = hexagon();
        let nu = Vec2::from_angle(0.0);
        match h.subdifferential(nu).unwrap() {
            Face::Edge(i) => {
                let e = h.edge(i);
                let scan: Vec<Vec2> = h
                    .vertices()
                    .iter()
                    .copied()
                    .filter(|v| (v.dot(nu) - h.dual_value(nu)).abs() < 1e-12)
                    .collect();
                assert_eq!(scan.len(), 2);
                assert!(scan.contains(&e.start) && scan.contains(&e.end));
            }
            f => panic!("expected an edge, got {f:?}"),
        }
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let a = SmoothAnisotropy::cosine(1.0, 0.1, 2.0).unwrap();
        let nu = Vec2::new(1.0, 0.0);
        let g = a.dual_gradient(nu).unwrap();
        let h = 1e-5;
        let fx = (a.dual_value(nu + Vec2::new(h, 0.0)) - a.dual_value(nu - Vec2::new(h, 0.0)))
            / (2.0 * h);
        let fy = (a.dual_value(nu + Vec2::new(0.0, h)) - a.dual_value(nu - Vec2::new(0.0, h)))
            / (2.0 * h);
        assert!((g.x - fx).abs() < 1e-6 && (g.y - fy).abs() < 1e-6);
        assert_eq!(
            SmoothAnisotropy::euclidean(1.0)
                .unwrap()
                .dual_gradient(Vec2::new(0.0, 1.0))
                .unwrap(),
            Vec2::new(0.0, 1.0)
        );
        assert!(matches!(
            a.dual_gradient(Vec2::new(2.0, 0.0)),
            Err(Error::NotUnit(_))
        ));
    }

    #[test]
    fn rejects_non_elliptic_profiles() {
        assert!(SmoothAnisotropy::cosine(1.0, 0.5, 2.0).is_err()); // 1 - 1.5 cos
        assert!(SmoothAnisotropy::cosine(1.0, 1.5, 0.0).is_ok());
        assert!(SmoothAnisotropy::cosine(-1.0, 0.0, 0.0).is_err());
        let a = SmoothAnisotropy::cosine(1.0, 0.05, 4.0).unwrap();
        assert!((a.ellipticity() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn triplet_params_octagon_and_hexagon() {
        let p = TripletParams::new(8, 1.0).unwrap();
        assert!((p.theta_n - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((p.delta - (1.0 - 1.0 / SQRT_2)).abs() < 1e-15);
        assert!((p.c_bar - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((p.q_y + (SQRT_2 - 1.0) / 2.0).abs() < 1e-15);
        assert!((p.q_z - 0.5).abs() < 1e-15);
        let p = TripletParams::new(6, 1.0).unwrap();
        assert_eq!(p.interval_ab, (0.0, 1.0));
        assert!((p.delta - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.c_bar - 1.0).abs() < 1e-15);
        assert!(TripletParams::new(7, 1.0).is_err());
        assert!(TripletParams::new(4, 1.0).is_err());
        assert!(TripletParams::new(8, 0.0).is_err());
    }

    #[test]
    fn triplet_hexagon_midpoint_is_unique() {
        let h = hexagon();
        let x = h.edge(0).point_at(0.5);
        let sol = h.solve_triplet(x).unwrap();
        assert!(sol.is_unique(), "{sol:?}");
        let (y, z) = sol.pairs[0];
        assert!((x + h.point(y) + h.point(z)).norm() < 1e-10);
        assert_ne!(y.edge, z.edge);
        assert!(y.edge != 0 && z.edge != 0);
    }

    #[test]
    fn triplet_square_has_a_family() {
        let sq = square();
        let sol = sq.solve_triplet(Vec2::new(1.0, 0.0)).unwrap();
        assert!(!sol.families.is_empty(), "{sol:?}");
        let f = sol.families[0];
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let y = sq.point(f.y_start).lerp(sq.point(f.y_end), t);
            let z = -Vec2::new(1.0, 0.0) - y;
            assert!((sq.gauge(y) - 1.0).abs() < 1e-12);
            assert!((sq.gauge(z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn triplet_rejects_interior_points() {
        assert!(matches!(
            hexagon().solve_triplet(Vec2::new(0.1, 0.1)),
            Err(Error::NotOnBoundary(_))
        ));
    }
}
