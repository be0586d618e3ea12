//! Planar networks: curves, junction tables, segment geometry, Φ-length,
//! parallelism and reconstruction of parallel networks from segment heights.
//!
//! Every curve is a list of nodes. Polygonal curves treat each pair of consecutive
//! nodes as a segment; a curve may end in a half-line leaving its last node, which is
//! then its final segment. Normals are `tau.perp()` (counterclockwise turn of the
//! tangent) throughout.

use crate::anisotropy::Anisotropy;
use crate::error::{Error, Result};
use crate::geometry::{segment_intersection, Line, SegmentHit, Vec2};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Angular tolerance (radians) for segment parallelism.
pub const PARALLEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    #[default]
    Polyline,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurveEnd {
    pub curve: usize,
    pub end: End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    /// Index into the anisotropy table.
    pub anisotropy: usize,
    pub kind: CurveKind,
    pub points: Vec<Vec2>,
    pub closed: bool,
    /// Direction of the unbounded tail leaving the last node.
    pub halfline: Option<Vec2>,
    /// Labels of the two phases separated by this curve, `i < j`.
    pub phases: Option<(usize, usize)>,
}

impl Curve {
    pub fn polyline(id: impl Into<String>, anisotropy: usize, points: Vec<Vec2>) -> Self {
        Curve {
            id: id.into(),
            anisotropy,
            kind: CurveKind::Polyline,
            points,
            closed: false,
            halfline: None,
            phases: None,
        }
    }

    pub fn with_halfline(mut self, direction: Vec2) -> Self {
        self.halfline = Some(direction.normalized());
        self
    }

    pub fn closed(mut self) -> Self {
        self.closed = true;
        self
    }

    pub fn sampled(mut self) -> Self {
        self.kind = CurveKind::Sampled;
        self
    }

    /// Bounded segments (edges between consecutive nodes, plus the closing edge).
    pub fn bounded_segments(&self) -> usize {
        let n = self.points.len();
        if self.closed {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    pub fn segment_count(&self) -> usize {
        self.bounded_segments() + usize::from(self.halfline.is_some())
    }

    pub fn end_point(&self, end: End) -> Vec2 {
        match end {
            End::Start => self.points[0],
            End::End => *self.points.last().expect("nonempty curve"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub point: Vec2,
    /// Incident curve ends in cyclic order.
    pub ends: Vec<CurveEnd>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId {
    pub curve: usize,
    pub index: usize,
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.curve, self.index)
    }
}

/// A segment or half-line: `start + t * direction` for `t` in `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Vec2,
    pub direction: Vec2,
    /// `f64::INFINITY` for a half-line.
    pub length: f64,
}

impl Segment {
    pub fn between(a: Vec2, b: Vec2) -> Self {
        let d = b - a;
        let length = d.norm();
        Segment {
            start: a,
            direction: d / length,
            length,
        }
    }

    pub fn ray(start: Vec2, direction: Vec2) -> Self {
        Segment {
            start,
            direction: direction.normalized(),
            length: f64::INFINITY,
        }
    }

    pub fn is_halfline(&self) -> bool {
        self.length.is_infinite()
    }

    pub fn end(&self) -> Vec2 {
        self.start + self.direction * self.length
    }

    pub fn normal(&self) -> Vec2 {
        self.direction.perp()
    }

    pub fn line(&self) -> Line {
        Line::through(self.start, self.direction)
    }

    /// Portion of the segment inside a disc, as a length.
    pub fn length_in(&self, disc: &Disc) -> f64 {
        let w = self.start - disc.center;
        let b = w.dot(self.direction);
        let c = w.norm_sq() - disc.radius * disc.radius;
        let disc2 = b * b - c;
        if disc2 <= 0.0 {
            return 0.0;
        }
        let r = disc2.sqrt();
        let lo = (-b - r).max(0.0);
        let hi = (-b + r).min(self.length);
        (hi - lo).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

/// Connected network of curves with an explicit junction table.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    curves: Vec<Curve>,
    junctions: Vec<Junction>,
    incidence: Vec<[Option<usize>; 2]>,
    offsets: Vec<usize>,
}

fn end_slot(end: End) -> usize {
    match end {
        End::Start => 0,
        End::End => 1,
    }
}

impl Network {
    /// Builds a network, snapping curve ends to their junction points.
    pub fn new(curves: Vec<Curve>, junctions: Vec<Junction>) -> Result<Self> {
        let mut curves = curves;
        for (i, c) in curves.iter_mut().enumerate() {
            if c.points.is_empty() {
                return Err(Error::InvalidNetwork(format!("curve {i} has no nodes")));
            }
            if c.points.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("curve nodes"));
            }
            if c.closed && c.halfline.is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "curve {i} cannot be both closed and unbounded"
                )));
            }
            if let Some(d) = c.halfline {
                if !d.is_finite() || d.norm() == 0.0 {
                    return Err(Error::InvalidNetwork(format!(
                        "curve {i} has a degenerate half-line direction"
                    )));
                }
                c.halfline = Some(d.normalized());
            }
            if c.points.len() < 2 && c.halfline.is_none() {
                return Err(Error::InvalidNetwork(format!(
                    "curve {i} needs at least two nodes"
                )));
            }
            if c.closed && c.points.len() < 3 {
                return Err(Error::InvalidNetwork(format!(
                    "closed curve {i} needs at least three nodes"
                )));
            }
        }
        let scale = scale_of(&curves);
        let snap = 1e-9 * scale;
        let mut incidence = vec![[None, None]; curves.len()];
        for (j, jn) in junctions.iter().enumerate() {
            if !jn.point.is_finite() {
                return Err(Error::NonFinite("junction point"));
            }
            for e in &jn.ends {
                let c = curves.get_mut(e.curve).ok_or_else(|| {
                    Error::InvalidNetwork(format!(
                        "junction {j} references unknown curve {}",
                        e.curve
                    ))
                })?;
                if c.closed {
                    return Err(Error::InvalidNetwork(format!(
                        "closed curve {} cannot end at junction {j}",
                        e.curve
                    )));
                }
                let slot = &mut incidence[e.curve][end_slot(e.end)];
                if slot.is_some() {
                    return Err(Error::InvalidNetwork(format!(
                        "curve {} end {:?} is attached to two junctions",
                        e.curve, e.end
                    )));
                }
                *slot = Some(j);
                let idx = match e.end {
                    End::Start => 0,
                    End::End => c.points.len() - 1,
                };
                let d = c.points[idx].dist(jn.point);
                if d > snap {
                    return Err(Error::InvalidNetwork(format!(
                        "curve {} end {:?} is {d:e} away from junction {j}",
                        e.curve, e.end
                    )));
                }
                c.points[idx] = jn.point;
            }
        }
        let mut offsets = Vec::with_capacity(curves.len() + 1);
        let mut acc = 0;
        for c in &curves {
            offsets.push(acc);
            acc += c.segment_count();
        }
        offsets.push(acc);
        Ok(Network {
            curves,
            junctions,
            incidence,
            offsets,
        })
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &Curve {
        &self.curves[i]
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Junction at a curve end, if any.
    pub fn junction_at(&self, curve: usize, end: End) -> Option<usize> {
        self.incidence[curve][end_slot(end)]
    }

    pub fn is_bounded(&self) -> bool {
        self.curves.iter().all(|c| c.halfline.is_none())
    }

    pub fn is_polygonal(&self) -> bool {
        self.curves.iter().all(|c| c.kind == CurveKind::Polyline)
    }

    /// Characteristic length (bounding-box diagonal, at least 1).
    pub fn scale(&self) -> f64 {
        scale_of(&self.curves)
    }

    pub fn segment_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = SegmentId> + '_ {
        self.curves.iter().enumerate().flat_map(|(curve, c)| {
            (0..c.segment_count()).map(move |index| SegmentId { curve, index })
        })
    }

    /// Position of a segment in the flat ordering used by height vectors.
    pub fn flat_index(&self, id: SegmentId) -> usize {
        self.offsets[id.curve] + id.index
    }

    pub fn segment_id(&self, flat: usize) -> SegmentId {
        let curve = self.offsets.partition_point(|&o| o <= flat) - 1;
        SegmentId {
            curve,
            index: flat - self.offsets[curve],
        }
    }

    pub fn segment(&self, id: SegmentId) -> Segment {
        let c = &self.curves[id.curve];
        let n = c.points.len();
        if id.index < c.bounded_segments() {
            Segment::between(c.points[id.index], c.points[(id.index + 1) % n])
        } else {
            Segment::ray(c.points[n - 1], c.halfline.expect("half-line segment"))
        }
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.segment_ids().map(|id| self.segment(id)).collect()
    }

    /// The bounded segment adjacent to a curve end; for a curve made of a lone
    /// half-line this is the half-line itself.
    pub fn end_segment(&self, curve: usize, end: End) -> SegmentId {
        let nb = self.curves[curve].bounded_segments();
        let index = match end {
            End::End if nb > 0 => nb - 1,
            _ => 0,
        };
        SegmentId { curve, index }
    }

    /// Unit tangent of a curve end, pointing away from the end into the curve.
    pub fn outgoing_direction(&self, curve: usize, end: End) -> Vec2 {
        let s = self.segment(self.end_segment(curve, end));
        match end {
            End::Start => s.direction,
            End::End => -s.direction,
        }
    }

    pub fn translated(&self, v: Vec2) -> Self {
        self.map_points(|p| p + v, |d| d)
    }

    /// Point reflection `p -> -p`.
    pub fn reflected(&self) -> Self {
        self.map_points(|p| -p, |d| -d)
    }

    fn map_points(&self, f: impl Fn(Vec2) -> Vec2, g: impl Fn(Vec2) -> Vec2) -> Self {
        let mut out = self.clone();
        for c in &mut out.curves {
            for p in &mut c.points {
                *p = f(*p);
            }
            c.halfline = c.halfline.map(&g);
        }
        for j in &mut out.junctions {
            j.point = f(j.point);
        }
        out
    }

    /// Replaces all node positions, keeping topology. Junction points follow the
    /// curve ends.
    pub fn with_points(&self, points: Vec<Vec<Vec2>>) -> Result<Self> {
        if points.len() != self.curves.len() {
            return Err(Error::InvalidNetwork("wrong number of curves".into()));
        }
        let mut out = self.clone();
        for (c, p) in out.curves.iter_mut().zip(points) {
            c.points = p;
        }
        for j in &mut out.junctions {
            let e = j.ends[0];
            j.point = out.curves[e.curve].end_point(e.end);
        }
        Network::new(out.curves, out.junctions)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

fn scale_of(curves: &[Curve]) -> f64 {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in curves.iter().flat_map(|c| c.points.iter()) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.is_finite() {
        return 1.0;
    }
    (hi - lo).norm().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DegenerateSegment(SegmentId),
    SelfIntersection(SegmentId, SegmentId),
    NonTripleJunction { junction: usize, degree: usize },
    Disconnected { components: usize },
    HalfLineAtJunction { curve: usize },
    Spoon { curve: usize },
    UnknownAnisotropy { curve: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DegenerateSegment(s) => write!(f, "degenerate segment {s}"),
            Violation::SelfIntersection(a, b) => {
                write!(f, "self-intersection between segments {a} and {b}")
            }
            Violation::NonTripleJunction { junction, degree } => {
                write!(f, "non-triple junction {junction} ({degree} incident ends)")
            }
            Violation::Disconnected { components } => {
                write!(f, "network is disconnected ({components} components)")
            }
            Violation::HalfLineAtJunction { curve } => {
                write!(f, "half-line of curve {curve} ends at a junction")
            }
            Violation::Spoon { curve } => write!(
                f,
                "spoon: closed loop {curve} attached to a half-line at a single junction"
            ),
            Violation::UnknownAnisotropy { curve } => {
                write!(f, "curve {curve} references an unknown anisotropy")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn validate(net: &Network) -> ValidationReport {
    let mut v = Vec::new();
    let tol = 1e-12 * net.scale();

    for id in net.segment_ids() {
        let s = net.segment(id);
        if !s.is_halfline() && !(s.length > tol) {
            v.push(Violation::DegenerateSegment(id));
        }
    }

    for (j, jn) in net.junctions.iter().enumerate() {
        if jn.ends.len() != 3 {
            v.push(Violation::NonTripleJunction {
                junction: j,
                degree: jn.ends.len(),
            });
        }
        for e in &jn.ends {
            if e.end == End::End && net.curves[e.curve].halfline.is_some() {
                v.push(Violation::HalfLineAtJunction { curve: e.curve });
            }
        }
        for e in &jn.ends {
            if e.end == End::Start
                && net.junction_at(e.curve, End::End) == Some(j)
                && jn
                    .ends
                    .iter()
                    .any(|o| o.curve != e.curve && net.curves[o.curve].halfline.is_some())
            {
                v.push(Violation::Spoon { curve: e.curve });
            }
        }
    }

    // connectivity through junctions
    let n = net.curves.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for jn in &net.junctions {
        if let Some(first) = jn.ends.first() {
            for e in &jn.ends[1..] {
                let a = find(&mut parent, first.curve);
                let b = find(&mut parent, e.curve);
                parent[a] = b;
            }
        }
    }
    let components = (0..n).filter(|&i| find(&mut parent, i) == i).count();
    if components > 1 {
        v.push(Violation::Disconnected { components });
    }

    v.extend(intersections(net, tol.max(1e-12)));
    ValidationReport { violations: v }
}

fn intersections(net: &Network, tol: f64) -> Vec<Violation> {
    let far = 1e3 * net.scale();
    let ids: Vec<SegmentId> = net.segment_ids().collect();
    let segs: Vec<(Vec2, Vec2)> = ids
        .iter()
        .map(|&id| {
            let s = net.segment(id);
            let len = if s.is_halfline() { far } else { s.length };
            (s.start, s.start + s.direction * len)
        })
        .collect();
    let boxes: Vec<(Vec2, Vec2)> = segs
        .iter()
        .map(|(a, b)| {
            (
                Vec2::new(a.x.min(b.x) - tol, a.y.min(b.y) - tol),
                Vec2::new(a.x.max(b.x) + tol, a.y.max(b.y) + tol),
            )
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let (bi, bj) = (boxes[i], boxes[j]);
            if bi.1.x < bj.0.x || bj.1.x < bi.0.x || bi.1.y < bj.0.y || bj.1.y < bi.0.y {
                continue;
            }
            let hit = segment_intersection(segs[i].0, segs[i].1, segs[j].0, segs[j].1, tol);
            let bad = match hit {
                SegmentHit::None => false,
                SegmentHit::Overlap(..) => true,
                SegmentHit::Point(p) => !shared_vertex(net, ids[i], ids[j], p, tol),
            };
            if bad {
                out.push(Violation::SelfIntersection(ids[i], ids[j]));
            }
        }
    }
    out
}

/// Whether two segments touch only at a vertex they legitimately share.
fn shared_vertex(net: &Network, a: SegmentId, b: SegmentId, p: Vec2, tol: f64) -> bool {
    let ends = |id: SegmentId| -> Vec<(Vec2, Option<(usize, End)>, usize)> {
        // (point, curve end if this vertex is one, node index)
        let c = &net.curves[id.curve];
        let n = c.points.len();
        let mut v = vec![(c.points[id.index % n], None, id.index % n)];
        if id.index < c.bounded_segments() {
            v.push((c.points[(id.index + 1) % n], None, (id.index + 1) % n));
        }
        for item in &mut v {
            if !c.closed {
                if item.2 == 0 {
                    item.1 = Some((id.curve, End::Start));
                } else if item.2 == n - 1 {
                    item.1 = Some((id.curve, End::End));
                }
            }
        }
        v
    };
    for (pa, ea, ia) in ends(a) {
        if pa.dist(p) > tol {
            continue;
        }
        for (pb, eb, ib) in ends(b) {
            if pb.dist(p) > tol {
                continue;
            }
            if a.curve == b.curve && ia == ib {
                return true;
            }
            if let (Some((ca, xa)), Some((cb, xb))) = (ea, eb) {
                let ja = net.junction_at(ca, xa);
                if ja.is_some() && ja == net.junction_at(cb, xb) {
                    return true;
                }
            }
        }
    }
    false
}

/// Φ-length of the network, restricted to a disc when given. Unbounded networks
/// need the disc.
pub fn phi_length(net: &Network, table: &[Anisotropy], window: Option<&Disc>) -> Result<f64> {
    if window.is_none() && !net.is_bounded() {
        return Err(Error::UnboundedWithoutWindow);
    }
    let mut total = 0.0;
    for id in net.segment_ids() {
        let s = net.segment(id);
        let a = table.get(net.curve(id.curve).anisotropy).ok_or_else(|| {
            Error::InvalidNetwork(format!("curve {} has no anisotropy", id.curve))
        })?;
        let len = match window {
            Some(d) => s.length_in(d),
            None => s.length,
        };
        if len > 0.0 {
            total += a.dual_value(s.normal())? * len;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceVector {
    /// Translation taking the carrier line of the source onto that of the target.
    pub vector: Vec2,
    /// `vector . nu_source`.
    pub height: f64,
    pub source: Option<SegmentId>,
    pub target: Option<SegmentId>,
}

/// Distance vector `H` with `line(t) = line(s) + H`.
pub fn distance_vector(s: &Segment, t: &Segment) -> Result<DistanceVector> {
    let sin = s.direction.cross(t.direction);
    if !sin.is_finite() {
        return Err(Error::NonFinite("segment direction"));
    }
    let angle = sin.abs().asin();
    if angle > PARALLEL_TOL {
        return Err(Error::NotParallel(angle));
    }
    let nu = s.normal();
    let height = (t.start - s.start).dot(nu);
    Ok(DistanceVector {
        vector: nu * height,
        height,
        source: None,
        target: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelReport {
    pub parallel: bool,
    /// Corresponding segments (identical ids when parallel).
    pub correspondence: Vec<(SegmentId, SegmentId)>,
    pub reason: Option<String>,
}

impl ParallelReport {
    fn no(reason: String) -> Self {
        ParallelReport {
            parallel: false,
            correspondence: Vec::new(),
            reason: Some(reason),
        }
    }
}

/// Checks whether `b` is parallel to `a`: same curves and segment counts, parallel
/// equally oriented segments, half-lines on the same lines, and the same junctions in
/// the same cyclic order.
pub fn is_parallel(a: &Network, b: &Network) -> ParallelReport {
    if a.curves.len() != b.curves.len() {
        return ParallelReport::no("different number of curves".into());
    }
    for (i, (ca, cb)) in a.curves.iter().zip(&b.curves).enumerate() {
        if ca.bounded_segments() != cb.bounded_segments()
            || ca.halfline.is_some() != cb.halfline.is_some()
            || ca.closed != cb.closed
        {
            return ParallelReport::no(format!("curve {i} has a different structure"));
        }
    }
    let tol = 1e-9 * a.scale().max(b.scale());
    let mut correspondence = Vec::new();
    for id in a.segment_ids() {
        let (sa, sb) = (a.segment(id), b.segment(id));
        let sin = sa.direction.cross(sb.direction).abs();
        if sin.asin() > PARALLEL_TOL || sa.direction.dot(sb.direction) <= 0.0 {
            return ParallelReport::no(format!("segment {id} is not parallel"));
        }
        if sa.is_halfline() && sa.line().signed_distance(sb.start).abs() > tol {
            return ParallelReport::no(format!("half-line {id} left its line"));
        }
        correspondence.push((id, id));
    }
    if a.junctions.len() != b.junctions.len() {
        return ParallelReport::no("different number of junctions".into());
    }
    for c in 0..a.curves.len() {
        for end in [End::Start, End::End] {
            if a.junction_at(c, end).is_some() != b.junction_at(c, end).is_some() {
                return ParallelReport::no(format!("curve {c} {end:?} changed its junction"));
            }
        }
    }
    for (ja, jb) in a.junctions.iter().zip(&b.junctions) {
        let oa = cyclic_order(a, ja);
        let ob = cyclic_order(b, jb);
        if !same_cycle(&oa, &ob) {
            return ParallelReport::no("junction order differs".into());
        }
    }
    ParallelReport {
        parallel: true,
        correspondence,
        reason: None,
    }
}

/// Incident curve ends sorted counterclockwise by outgoing direction.
fn cyclic_order(net: &Network, j: &Junction) -> Vec<CurveEnd> {
    let mut ends: Vec<(f64, CurveEnd)> = j
        .ends
        .iter()
        .map(|e| (net.outgoing_direction(e.curve, e.end).angle(), *e))
        .collect();
    ends.sort_by(|x, y| x.0.total_cmp(&y.0));
    ends.into_iter().map(|(_, e)| e).collect()
}

fn same_cycle(a: &[CurveEnd], b: &[CurveEnd]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    (0..b.len()).any(|r| (0..a.len()).all(|i| a[i] == b[(i + r) % b.len()]))
}

/// Per-segment distance vectors of `b` from `a` (parallel networks).
pub fn distance_vectors(a: &Network, b: &Network) -> Result<Vec<DistanceVector>> {
    let rep = is_parallel(a, b);
    if !rep.parallel {
        return Err(Error::NetworksNotParallel(rep.reason.unwrap_or_default()));
    }
    a.segment_ids()
        .map(|id| {
            let mut d = distance_vector(&a.segment(id), &b.segment(id))?;
            d.source = Some(id);
            d.target = Some(id);
            Ok(d)
        })
        .collect()
}

/// `max |H(S, S')|` over corresponding segments.
pub fn network_distance(a: &Network, b: &Network) -> Result<f64> {
    Ok(distance_vectors(a, b)?
        .iter()
        .map(|d| d.height.abs())
        .fold(0.0, f64::max))
}

/// Heights of `b` relative to the reference `a`, in flat segment order.
pub fn heights_between(a: &Network, b: &Network) -> Result<Vec<f64>> {
    Ok(distance_vectors(a, b)?.iter().map(|d| d.height).collect())
}

/// Relative tolerance used when solving junction positions from shifted lines.
pub const REBUILD_TOL: f64 = 1e-9;

/// The parallel network whose segment carrier lines are those of `reference` moved by
/// `heights[k] * nu_k` (flat segment order). Half-lines keep their lines, so their
/// heights must be zero.
pub fn rebuild_from_heights(reference: &Network, heights: &[f64]) -> Result<Network> {
    if heights.len() != reference.segment_count() {
        return Err(Error::Precondition(format!(
            "expected {} heights, got {}",
            reference.segment_count(),
            heights.len()
        )));
    }
    if heights.iter().any(|h| !h.is_finite()) {
        return Err(Error::NonFinite("heights"));
    }
    let scale = reference.scale();
    let tol = REBUILD_TOL * scale;
    let ids: Vec<SegmentId> = reference.segment_ids().collect();
    let mut lines = Vec::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        let s = reference.segment(*id);
        if s.is_halfline() {
            if heights[k].abs() > tol {
                return Err(Error::Precondition(format!(
                    "half-line {id} must keep its carrier line (height {})",
                    heights[k]
                )));
            }
            lines.push(s.line());
        } else {
            lines.push(s.line().shifted(heights[k]));
        }
    }
    let line_of = |id: SegmentId| lines[reference.flat_index(id)];

    let mut junction_points = Vec::with_capacity(reference.junctions.len());
    for (j, jn) in reference.junctions.iter().enumerate() {
        let ls: Vec<Line> = jn
            .ends
            .iter()
            .map(|e| line_of(reference.end_segment(e.curve, e.end)))
            .collect();
        junction_points.push(least_squares_point(&ls, j, tol)?);
    }

    let mut points = Vec::with_capacity(reference.curves.len());
    for (ci, c) in reference.curves.iter().enumerate() {
        let n = c.points.len();
        let nb = c.bounded_segments();
        let mut p = Vec::with_capacity(n);
        for k in 0..n {
            let end = if c.closed {
                None
            } else if k == 0 {
                Some(End::Start)
            } else if k == n - 1 {
                Some(End::End)
            } else {
                None
            };
            let q = if let Some(j) = end.and_then(|e| reference.junction_at(ci, e)) {
                junction_points[j]
            } else if end == Some(End::End) && c.halfline.is_some() {
                if nb == 0 {
                    // lone half-line with a free start
                    c.points[0]
                } else {
                    intersect(
                        &line_of(SegmentId {
                            curve: ci,
                            index: nb - 1,
                        }),
                        &line_of(SegmentId {
                            curve: ci,
                            index: nb,
                        }),
                        c.points[k],
                        tol,
                    )?
                }
            } else if let Some(e) = end {
                let seg = reference.end_segment(ci, e);
                let s = reference.segment(seg);
                c.points[k] + s.normal() * heights[reference.flat_index(seg)]
            } else {
                let prev = (k + nb - 1) % nb;
                intersect(
                    &line_of(SegmentId {
                        curve: ci,
                        index: prev,
                    }),
                    &line_of(SegmentId {
                        curve: ci,
                        index: k % nb,
                    }),
                    c.points[k],
                    tol,
                )?
            };
            p.push(q);
        }
        points.push(p);
    }

    for (ci, c) in reference.curves.iter().enumerate() {
        let n = c.points.len();
        for k in 0..c.bounded_segments() {
            let d = reference
                .segment(SegmentId {
                    curve: ci,
                    index: k,
                })
                .direction;
            let len = (points[ci][(k + 1) % n] - points[ci][k]).dot(d);
            if !(len > 0.0) {
                return Err(Error::SegmentCollapsed {
                    curve: ci,
                    segment: k,
                    length: len,
                });
            }
        }
    }

    let mut out = reference.clone();
    for (c, p) in out.curves.iter_mut().zip(points) {
        c.points = p;
    }
    for (jn, q) in out.junctions.iter_mut().zip(junction_points) {
        jn.point = q;
    }
    Ok(out)
}

/// Intersection of consecutive carrier lines. Collinear lines keep the node at the
/// projection of its reference position.
fn intersect(a: &Line, b: &Line, reference: Vec2, tol: f64) -> Result<Vec2> {
    if let Some(p) = a.intersect(b, 1e-12) {
        return Ok(p);
    }
    let gap = if a.normal.dot(b.normal) > 0.0 {
        (a.offset - b.offset).abs()
    } else {
        (a.offset + b.offset).abs()
    };
    if gap <= tol {
        return Ok(reference - a.normal * a.signed_distance(reference));
    }
    Err(Error::DegenerateIntersection(
        "consecutive carrier lines are parallel".into(),
    ))
}

fn least_squares_point(lines: &[Line], junction: usize, tol: f64) -> Result<Vec2> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for l in lines {
        let n = l.normal;
        a11 += n.x * n.x;
        a12 += n.x * n.y;
        a22 += n.y * n.y;
        b1 += n.x * l.offset;
        b2 += n.y * l.offset;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-12 {
        return Err(Error::DegenerateIntersection(format!(
            "lines at junction {junction} are parallel"
        )));
    }
    let p = Vec2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
    let residual = lines
        .iter()
        .map(|l| l.signed_distance(p).abs())
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(Error::IncompatibleHeights { junction, residual });
    }
    Ok(p)
}
