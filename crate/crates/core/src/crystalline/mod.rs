//! Cahn–Hoffman fields on polygonal networks and crystalline curvature.
//!
//! A field assigns to every node of every curve a point of the Wulff boundary of the
//! curve's anisotropy (a junction node carries one value per incident curve). On each
//! bounded segment the two end values must lie in the face of `B_phi` selected by the
//! segment normal; the field is linear in between. At a junction the values balance:
//! `sum s_i N_i = 0` with `s_i = +1` for curves ending there and `-1` for curves
//! starting there.
//!
//! The minimizing field is found by a box-constrained QP in reduced coordinates: one
//! scalar per junction (position along the null direction of the balance equations)
//! and one per free edge-valued node.

pub mod benchmarks;
pub mod qp;

use crate::anisotropy::{
    triangle_inequality_violation, Anisotropy, BoundaryPoint, CrystallinePolytope, Face,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::network::{End, Network, SegmentId};
use nalgebra::{DMatrix, DVector};
use qp::{BoxQp, QpError};

/// A Cahn–Hoffman field: `values[curve][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CahnHoffmanField {
    pub values: Vec<Vec<Vec2>>,
    pub boundary: Vec<Vec<BoundaryPoint>>,
}

impl CahnHoffmanField {
    pub fn value(&self, curve: usize, node: usize) -> Vec2 {
        self.values[curve][node]
    }
}

/// `(N(B) - N(A)) . tau / |S|`; zero on half-lines.
pub fn segment_curvature(net: &Network, field: &CahnHoffmanField, id: SegmentId) -> Result<f64> {
    let s = net.segment(id);
    if s.is_halfline() {
        return Ok(0.0);
    }
    if !(s.length > 0.0) {
        return Err(Error::InvalidNetwork(format!(
            "segment {id} has zero length"
        )));
    }
    let n = net.curve(id.curve).points.len();
    let a = field.value(id.curve, id.index);
    let b = field.value(id.curve, (id.index + 1) % n);
    Ok((b - a).dot(s.direction) / s.length)
}

/// Feasible set of one node value.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotSet {
    Point(Vec2),
    Edge { edge: usize },
}

/// Affine dependence of a node value on the QP variables.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SlotMap {
    base: Vec2,
    var: Option<(usize, Vec2)>,
}

impl SlotMap {
    fn eval(&self, x: &[f64]) -> Vec2 {
        match self.var {
            Some((v, d)) => self.base + d * x[v],
            None => self.base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JunctionFlag {
    Interior,
    OnRegionBoundary,
    AtVertex,
}

/// Reduced description of the admissible values at one junction.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSystem {
    pub junction: usize,
    /// QP variable moving along the null direction, absent when the values are forced.
    pub variable: Option<usize>,
    pub lo: f64,
    pub hi: f64,
    /// Per incident end: Wulff-edge offset at variable value zero.
    pub offsets: Vec<f64>,
    /// Per incident end: rate of change of its Wulff-edge offset along the variable
    /// (zero for values fixed at a vertex or by the balance).
    pub rates: Vec<f64>,
    /// Per incident end: length of its Wulff edge (zero when pinned).
    pub lengths: Vec<f64>,
    /// Per incident end: whether the value is pinned to a Wulff vertex by the faces.
    pub pinned: Vec<bool>,
}

/// The reduced minimization problem for the crystalline curvature of a network.
#[derive(Debug, Clone)]
pub struct CurvatureProblem {
    slots: Vec<Vec<SlotMap>>,
    slot_edges: Vec<Vec<Option<usize>>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    junctions: Vec<JunctionSystem>,
    terms: Vec<Term>,
    polys: Vec<CrystallinePolytope>,
    curve_poly: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    curve: usize,
    a: usize,
    b: usize,
    tau: Vec2,
    weight: f64,
}

fn polytopes(
    net: &Network,
    table: &[Anisotropy],
) -> Result<(Vec<CrystallinePolytope>, Vec<usize>)> {
    let mut polys = Vec::new();
    let mut index = vec![usize::MAX; table.len()];
    let mut curve_poly = Vec::with_capacity(net.curves().len());
    for (ci, c) in net.curves().iter().enumerate() {
        let a = table.get(c.anisotropy).ok_or_else(|| {
            Error::InvalidNetwork(format!("curve {ci} references unknown anisotropy"))
        })?;
        let p = a.as_crystalline().ok_or_else(|| {
            Error::WrongAnisotropyKind(format!("curve {ci} needs a crystalline anisotropy"))
        })?;
        if !p.is_even() {
            return Err(Error::InvalidAnisotropy(format!(
                "anisotropy of curve {ci} is not even"
            )));
        }
        if index[c.anisotropy] == usize::MAX {
            index[c.anisotropy] = polys.len();
            polys.push(p.clone());
        }
        curve_poly.push(index[c.anisotropy]);
    }
    Ok((polys, curve_poly))
}

/// Faces of the segments incident to each node of a curve, intersected.
fn node_set(poly: &CrystallinePolytope, faces: &[Face]) -> Option<SlotSet> {
    let tol = poly.boundary_tolerance();
    let as_seg = |f: Face| -> (Vec2, Vec2) {
        match f {
            Face::Vertex(i) => (poly.vertices()[i], poly.vertices()[i]),
            Face::Edge(i) => (poly.edge(i).start, poly.edge(i).end),
        }
    };
    let mut set = match faces[0] {
        Face::Edge(i) => SlotSet::Edge { edge: i },
        Face::Vertex(i) => SlotSet::Point(poly.vertices()[i]),
    };
    for &f in &faces[1..] {
        set = match (set, f) {
            (SlotSet::Edge { edge }, Face::Edge(j)) if edge == j => set,
            (SlotSet::Edge { edge }, g) => {
                let e = poly.edge(edge);
                let (a, b) = as_seg(g);
                let mut hit = None;
                for p in [a, b, e.start, e.end] {
                    let on_e = crate::geometry::project_to_segment(p, e.start, e.end)
                        .0
                        .dist(p)
                        <= tol;
                    let on_g = crate::geometry::project_to_segment(p, a, b).0.dist(p) <= tol;
                    if on_e && on_g {
                        hit = Some(p);
                        break;
                    }
                }
                SlotSet::Point(hit?)
            }
            (SlotSet::Point(p), g) => {
                let (a, b) = as_seg(g);
                if crate::geometry::project_to_segment(p, a, b).0.dist(p) <= tol {
                    set
                } else {
                    return None;
                }
            }
        };
    }
    Some(set)
}

impl CurvatureProblem {
    /// Assembles the reduced problem; fails with [`Error::NotRegular`] when the network
    /// admits no Cahn–Hoffman field.
    pub fn new(net: &Network, table: &[Anisotropy]) -> Result<Self> {
        if !net.is_polygonal() {
            return Err(Error::Precondition(
                "crystalline curvature needs polygonal curves".into(),
            ));
        }
        let (polys, curve_poly) = polytopes(net, table)?;
        warn_triangle_inequality(net, table);

        // feasible set of every node value
        let mut sets: Vec<Vec<SlotSet>> = Vec::with_capacity(net.curves().len());
        for (ci, c) in net.curves().iter().enumerate() {
            let poly = &polys[curve_poly[ci]];
            let faces: Vec<Face> = (0..c.segment_count())
                .map(|k| {
                    poly.subdifferential(
                        net.segment(SegmentId {
                            curve: ci,
                            index: k,
                        })
                        .normal(),
                    )
                })
                .collect::<Result<_>>()?;
            let n = c.points.len();
            let nb = c.bounded_segments();
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                let mut incident = Vec::with_capacity(2);
                if c.closed {
                    incident.push(faces[(k + nb - 1) % nb]);
                    incident.push(faces[k]);
                } else {
                    if k > 0 {
                        incident.push(faces[k - 1]);
                    }
                    if k < c.segment_count() {
                        incident.push(faces[k]);
                    }
                }
                let set = node_set(poly, &incident).ok_or_else(|| {
                    Error::NotRegular(format!(
                        "faces of the segments at node {k} of curve {ci} do not meet"
                    ))
                })?;
                row.push(set);
            }
            sets.push(row);
        }

        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut slots: Vec<Vec<Option<SlotMap>>> =
            sets.iter().map(|r| vec![None; r.len()]).collect();
        let mut slot_edges: Vec<Vec<Option<usize>>> =
            sets.iter().map(|r| vec![None; r.len()]).collect();

        let mut junctions = Vec::with_capacity(net.junctions().len());
        for (j, jn) in net.junctions().iter().enumerate() {
            if jn.ends.len() != 3 {
                return Err(Error::InvalidNetwork(format!(
                    "junction {j} has {} incident curves; only triple junctions are supported",
                    jn.ends.len()
                )));
            }
            let nodes: Vec<(usize, usize, f64)> = jn
                .ends
                .iter()
                .map(|e| {
                    let n = net.curve(e.curve).points.len();
                    match e.end {
                        End::Start => (e.curve, 0, -1.0),
                        End::End => (e.curve, n - 1, 1.0),
                    }
                })
                .collect();
            let sys = junction_system(j, &nodes, &sets, &polys, &curve_poly, lo.len())?;
            let var_dir: Vec<Option<Vec2>> = sys.1;
            let base: Vec<Vec2> = sys.2;
            let js = sys.0;
            if let Some(v) = js.variable {
                debug_assert_eq!(v, lo.len());
                lo.push(js.lo);
                hi.push(js.hi);
            }
            for (i, &(c, k, _)) in nodes.iter().enumerate() {
                slots[c][k] = Some(SlotMap {
                    base: base[i],
                    var: js.variable.zip(var_dir[i]),
                });
                if let SlotSet::Edge { edge } = sets[c][k] {
                    slot_edges[c][k] = Some(edge);
                }
            }
            junctions.push(js);
        }

        for (ci, row) in sets.iter().enumerate() {
            let poly = &polys[curve_poly[ci]];
            for (k, set) in row.iter().enumerate() {
                if slots[ci][k].is_some() {
                    continue;
                }
                slots[ci][k] = Some(match *set {
                    SlotSet::Point(p) => SlotMap { base: p, var: None },
                    SlotSet::Edge { edge } => {
                        let e = poly.edge(edge);
                        slot_edges[ci][k] = Some(edge);
                        lo.push(0.0);
                        hi.push(e.length);
                        SlotMap {
                            base: e.start,
                            var: Some((lo.len() - 1, e.tangent)),
                        }
                    }
                });
            }
        }
        let slots: Vec<Vec<SlotMap>> = slots
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|s| s.expect("every node assigned"))
                    .collect()
            })
            .collect();

        let mut terms = Vec::new();
        for (ci, c) in net.curves().iter().enumerate() {
            let n = c.points.len();
            let a = &table[c.anisotropy];
            for k in 0..c.bounded_segments() {
                let s = net.segment(SegmentId {
                    curve: ci,
                    index: k,
                });
                terms.push(Term {
                    curve: ci,
                    a: k,
                    b: (k + 1) % n,
                    tau: s.direction,
                    weight: a.dual_value(s.normal())? / s.length,
                });
            }
        }

        Ok(CurvatureProblem {
            slots,
            slot_edges,
            lo,
            hi,
            junctions,
            terms,
            polys,
            curve_poly,
        })
    }

    pub fn variable_count(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn junctions(&self) -> &[JunctionSystem] {
        &self.junctions
    }

    /// `sum over segments of phi°(nu_S) / |S| * ((N(B) - N(A)) . tau_S)^2`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let d = (self.slots[t.curve][t.b].eval(x) - self.slots[t.curve][t.a].eval(x))
                    .dot(t.tau);
                t.weight * d * d
            })
            .sum()
    }

    pub fn qp(&self) -> BoxQp {
        let n = self.variable_count();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let mut c = 0.0;
        for t in &self.terms {
            let (sa, sb) = (self.slots[t.curve][t.a], self.slots[t.curve][t.b]);
            let d0 = (sb.base - sa.base).dot(t.tau);
            let mut coef: Vec<(usize, f64)> = Vec::with_capacity(2);
            if let Some((v, d)) = sb.var {
                coef.push((v, d.dot(t.tau)));
            }
            if let Some((v, d)) = sa.var {
                coef.push((v, -d.dot(t.tau)));
            }
            for &(i, ci) in &coef {
                g[i] += 2.0 * t.weight * d0 * ci;
                for &(k, ck) in &coef {
                    h[(i, k)] += 2.0 * t.weight * ci * ck;
                }
            }
            c += t.weight * d0 * d0;
        }
        BoxQp {
            h,
            g,
            c,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    /// The field for given variable values.
    pub fn field(&self, x: &[f64]) -> CahnHoffmanField {
        let values: Vec<Vec<Vec2>> = self
            .slots
            .iter()
            .map(|r| r.iter().map(|s| s.eval(x)).collect())
            .collect();
        let boundary = values
            .iter()
            .enumerate()
            .map(|(ci, r)| {
                let poly = &self.polys[self.curve_poly[ci]];
                r.iter()
                    .enumerate()
                    .map(|(k, &v)| match self.slot_edges[ci][k] {
                        Some(edge) => {
                            let e = poly.edge(edge);
                            BoundaryPoint {
                                edge,
                                offset: (v - e.start).dot(e.tangent).clamp(0.0, e.length),
                            }
                        }
                        None => poly.locate(v).unwrap_or(BoundaryPoint {
                            edge: 0,
                            offset: 0.0,
                        }),
                    })
                    .collect()
            })
            .collect();
        CahnHoffmanField { values, boundary }
    }

    /// A feasible point: every variable at the middle of its range.
    pub fn midpoint(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn solve(&self, net: &Network) -> Result<MinField> {
        let q = self.qp();
        let sol = q.solve().map_err(|e| match e {
            QpError::NotPositiveDefinite(vars) => {
                Error::NotStrictlyConvex(format!("objective is flat along variables {vars:?}"))
            }
            other => Error::NotStrictlyConvex(other.to_string()),
        })?;
        let field = self.field(&sol.x);
        let curvatures = net
            .segment_ids()
            .map(|id| segment_curvature(net, &field, id))
            .collect::<Result<Vec<_>>>()?;
        Ok(MinField {
            objective: self.objective(&sol.x),
            variables: sol.x,
            field,
            curvatures,
            junctions: self.junctions.clone(),
        })
    }
}

type JunctionParts = (JunctionSystem, Vec<Option<Vec2>>, Vec<Vec2>);

/// Balance equations at one junction reduced to a single parameter.
fn junction_system(
    j: usize,
    nodes: &[(usize, usize, f64)],
    sets: &[Vec<SlotSet>],
    polys: &[CrystallinePolytope],
    curve_poly: &[usize],
    next_var: usize,
) -> Result<JunctionParts> {
    let scale = polys.iter().map(|p| p.diameter()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let k = nodes.len();
    let mut rhs = Vec2::ZERO;
    let mut cols: Vec<(usize, Vec2, Vec2, f64)> = Vec::new(); // (end index, start, tangent, length)
    let mut pinned = vec![false; k];
    for (i, &(c, node, s)) in nodes.iter().enumerate() {
        match sets[c][node] {
            SlotSet::Point(p) => {
                rhs -= p * s;
                pinned[i] = true;
            }
            SlotSet::Edge { edge } => {
                let e = polys[curve_poly[c]].edge(edge);
                rhs -= e.start * s;
                cols.push((i, e.start, e.tangent * s, e.length));
            }
        }
    }
    let m = cols.len();
    let mat = DMatrix::from_fn(
        2,
        m,
        |r, col| if r == 0 { cols[col].2.x } else { cols[col].2.y },
    );
    let b = DVector::from_column_slice(&[rhs.x, rhs.y]);
    let (t0, rank) = if m == 0 {
        (DVector::zeros(0), 0)
    } else {
        let svd = mat.clone().svd(true, true);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
        let t0 = svd
            .solve(&b, 1e-10)
            .map_err(|e| Error::NotRegular(format!("junction {j}: {e}")))?;
        (t0, rank)
    };
    let residual = if m == 0 {
        b.norm()
    } else {
        (&mat * &t0 - &b).norm()
    };
    if residual > tol {
        return Err(Error::NotRegular(format!(
            "junction {j}: no admissible triplet on the faces of the incident segments (gap {residual:e})"
        )));
    }
    let nullity = m - rank;
    let mut rates = vec![0.0; k];
    let mut offsets = vec![0.0; k];
    let mut lengths = vec![0.0; k];
    for (col, &(i, _, _, len)) in cols.iter().enumerate() {
        lengths[i] = len;
        offsets[i] = if nullity == 0 {
            t0[col].clamp(0.0, len)
        } else {
            t0[col]
        };
    }
    let mut var_dir = vec![None; k];
    let mut base = vec![Vec2::ZERO; k];
    for (i, &(c, node, _)) in nodes.iter().enumerate() {
        if let SlotSet::Point(p) = sets[c][node] {
            base[i] = p;
        }
    }
    let (variable, lo, hi) = match nullity {
        0 => {
            for (col, &(i, start, tan, len)) in cols.iter().enumerate() {
                let t = t0[col];
                if t < -tol || t > len + tol {
                    return Err(Error::NotRegular(format!(
                        "junction {j}: forced value leaves its Wulff edge"
                    )));
                }
                let s = nodes[i].2;
                base[i] = start + tan * (t.clamp(0.0, len) * s);
            }
            (None, 0.0, 0.0)
        }
        1 => {
            let z = null_vector(&cols.iter().map(|c| c.2).collect::<Vec<_>>());
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (col, &(_, _, _, len)) in cols.iter().enumerate() {
                if z[col].abs() <= 1e-14 {
                    if t0[col] < -tol || t0[col] > len + tol {
                        return Err(Error::NotRegular(format!(
                            "junction {j}: forced value leaves its Wulff edge"
                        )));
                    }
                    continue;
                }
                let a = (0.0 - t0[col]) / z[col];
                let c = (len - t0[col]) / z[col];
                lo = lo.max(a.min(c));
                hi = hi.min(a.max(c));
            }
            if lo > hi + tol {
                return Err(Error::NotRegular(format!(
                    "junction {j}: admissible triplets miss the incident faces"
                )));
            }
            if lo > hi {
                let mid = 0.5 * (lo + hi);
                lo = mid;
                hi = mid;
            }
            for (col, &(i, start, tan, _)) in cols.iter().enumerate() {
                let s = nodes[i].2;
                // value = start + t * edge_tangent, t = t0 + y z
                base[i] = start + tan * (t0[col] * s);
                var_dir[i] = Some(tan * (z[col] * s));
                rates[i] = z[col];
            }
            (Some(next_var), lo, hi)
        }
        _ => return Err(Error::DegenerateJunction(j)),
    };
    Ok((
        JunctionSystem {
            junction: j,
            variable,
            lo,
            hi,
            offsets,
            rates,
            lengths,
            pinned,
        },
        var_dir,
        base,
    ))
}

/// Unit (max-norm) null vector of the 2 x m matrix with the given columns, m <= 3,
/// normalized so that its first nonzero entry is positive.
fn null_vector(cols: &[Vec2]) -> Vec<f64> {
    let mut z = match cols.len() {
        1 => vec![1.0],
        2 => {
            // rank one: pick the nonzero row
            let r0 = [cols[0].x, cols[1].x];
            let r1 = [cols[0].y, cols[1].y];
            let r = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) {
                r0
            } else {
                r1
            };
            vec![-r[1], r[0]]
        }
        _ => {
            let r0 = [cols[0].x, cols[1].x, cols[2].x];
            let r1 = [cols[0].y, cols[1].y, cols[2].y];
            vec![
                r0[1] * r1[2] - r0[2] * r1[1],
                r0[2] * r1[0] - r0[0] * r1[2],
                r0[0] * r1[1] - r0[1] * r1[0],
            ]
        }
    };
    let m = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sign = z
        .iter()
        .find(|v| v.abs() > 1e-14 * m)
        .map_or(1.0, |v| v.signum());
    for v in &mut z {
        *v *= sign / m;
        if v.abs() <= 1e-14 {
            *v = 0.0;
        }
    }
    z
}

fn warn_triangle_inequality(net: &Network, table: &[Anisotropy]) {
    for (j, jn) in net.junctions().iter().enumerate() {
        if jn.ends.len() != 3 {
            continue;
        }
        let a: Vec<&Anisotropy> = jn
            .ends
            .iter()
            .map(|e| &table[net.curve(e.curve).anisotropy])
            .collect();
        if let Some(v) = triangle_inequality_violation(a[0], a[1], a[2], 360) {
            log::warn!("junction {j}: anisotropies violate the triangle inequality by {v:e}");
        }
    }
}

/// Result of the curvature minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct MinField {
    pub field: CahnHoffmanField,
    pub objective: f64,
    pub variables: Vec<f64>,
    /// Crystalline curvature per segment, flat segment order.
    pub curvatures: Vec<f64>,
    pub junctions: Vec<JunctionSystem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub regular: bool,
    pub witness: Option<CahnHoffmanField>,
    pub reason: Option<String>,
}

/// Whether the network admits a Cahn–Hoffman field, with a witness when it does.
pub fn phi_regular(net: &Network, table: &[Anisotropy]) -> Result<RegularityReport> {
    match CurvatureProblem::new(net, table) {
        Ok(p) => Ok(RegularityReport {
            regular: true,
            witness: Some(p.field(&p.midpoint())),
            reason: None,
        }),
        Err(Error::NotRegular(reason)) => Ok(RegularityReport {
            regular: false,
            witness: None,
            reason: Some(reason),
        }),
        Err(e) => Err(e),
    }
}

/// The Cahn–Hoffman field minimizing `∫ phi°(nu) (div N)^2`.
pub fn min_field(net: &Network, table: &[Anisotropy]) -> Result<MinField> {
    CurvatureProblem::new(net, table)?.solve(net)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionStability {
    pub junction: usize,
    pub margin: f64,
    pub flag: JunctionFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Smallest Wulff-boundary distance from a minimizing junction value to the edge of
    /// its admissible range; zero when some value is forced or sits on a vertex.
    pub margin: f64,
    pub junctions: Vec<JunctionStability>,
    pub stable: bool,
}

pub fn stability_margin(field: &MinField) -> StabilityReport {
    let mut out = Vec::with_capacity(field.junctions.len());
    for js in &field.junctions {
        let y = js.variable.map_or(0.0, |v| field.variables[v]);
        let at_vertex = js.pinned.iter().any(|&p| p)
            || (0..js.rates.len()).any(|i| {
                let t = js.offsets[i] + y * js.rates[i];
                !js.pinned[i] && (t <= 0.0 || t >= js.lengths[i])
            });
        let margin = match js.variable {
            Some(_) if !at_vertex => {
                let room = (y - js.lo).min(js.hi - y).max(0.0);
                js.rates
                    .iter()
                    .map(|r| r.abs() * room)
                    .fold(f64::INFINITY, f64::min)
            }
            _ => 0.0,
        };
        let flag = if at_vertex {
            JunctionFlag::AtVertex
        } else if margin > 0.0 {
            JunctionFlag::Interior
        } else {
            JunctionFlag::OnRegionBoundary
        };
        out.push(JunctionStability {
            junction: js.junction,
            margin,
            flag,
        });
    }
    let margin = out.iter().map(|j| j.margin).fold(f64::INFINITY, f64::min);
    StabilityReport {
        stable: margin > 0.0,
        margin,
        junctions: out,
    }
}

/// Largest `|sum_i phi°_i(nu_i) kappa_i w_i|` over triple junctions, where curvatures
/// are taken with every curve oriented away from the junction and `w_i` is the cross
/// product of the other two outgoing directions (in the junction's order). The weights
/// make the sum vanish for the curvatures of a parallel motion.
pub fn curvature_balance_residual(
    net: &Network,
    table: &[Anisotropy],
    curvatures: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for jn in net.junctions() {
        if jn.ends.len() != 3 {
            continue;
        }
        let dirs: Vec<Vec2> = jn
            .ends
            .iter()
            .map(|e| net.outgoing_direction(e.curve, e.end))
            .collect();
        let mut sum = 0.0;
        for (i, e) in jn.ends.iter().enumerate() {
            let seg = net.end_segment(e.curve, e.end);
            let s = net.segment(seg);
            let sign = if e.end == End::Start { 1.0 } else { -1.0 };
            let k = sign * curvatures[net.flat_index(seg)];
            let w = dirs[(i + 1) % 3].cross(dirs[(i + 2) % 3]);
            sum += table[net.curve(e.curve).anisotropy].dual_value(s.normal())? * k * w;
        }
        worst = worst.max(sum.abs());
    }
    Ok(worst)
}
