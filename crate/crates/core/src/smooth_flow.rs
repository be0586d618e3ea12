//! Special anisotropic curvature flow of sampled networks.
//!
//! Interior nodes move by explicit Euler on `u_t = beta u_xx / |u_x|^2`; after each
//! step every triple junction is placed at the minimizer of the discrete energy of
//! its incident end edges, which is exactly the discrete balance of Cahn-Hoffman
//! vectors. Free curve ends stay where they are.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::{Anisotropy, SmoothAnisotropy};
use crate::geometry::gauss_legendre;
use crate::network::{End, Network};
use crate::{Error, Result, Vec2};

/// Smallest node spacing accepted by the difference formulas, relative to the
/// network scale.
const SPACING_TOL: f64 = 1e-14;

pub(crate) fn smooth_table(net: &Network, table: &[Anisotropy]) -> Result<Vec<SmoothAnisotropy>> {
    let mut out = Vec::with_capacity(net.curves().len());
    for (i, c) in net.curves().iter().enumerate() {
        let a = table
            .get(c.anisotropy)
            .ok_or_else(|| Error::InvalidNetwork(format!("curve {i} has no anisotropy")))?;
        let s = a.as_smooth().ok_or_else(|| {
            Error::WrongAnisotropyKind(format!("curve {i} needs a smooth anisotropy"))
        })?;
        out.push(s.clone());
    }
    Ok(out)
}

/// First and second parameter derivatives at node `k` (parameter spacing 1).
/// Open-curve ends use one-sided three-point stencils.
fn derivatives(p: &[Vec2], closed: bool, k: usize) -> (Vec2, Vec2) {
    let n = p.len();
    if closed {
        let a = p[(k + n - 1) % n];
        let b = p[(k + 1) % n];
        return ((b - a) * 0.5, a - p[k] * 2.0 + b);
    }
    if k == 0 {
        (
            (p[1] * 4.0 - p[0] * 3.0 - p[2]) * 0.5,
            p[0] - p[1] * 2.0 + p[2],
        )
    } else if k == n - 1 {
        (
            (p[n - 1] * 3.0 - p[n - 2] * 4.0 + p[n - 3]) * 0.5,
            p[n - 1] - p[n - 2] * 2.0 + p[n - 3],
        )
    } else {
        (
            (p[k + 1] - p[k - 1]) * 0.5,
            p[k - 1] - p[k] * 2.0 + p[k + 1],
        )
    }
}

fn check_nodes(p: &[Vec2], closed: bool) -> Result<()> {
    if p.len() < 3 {
        return Err(Error::Precondition(
            "a sampled curve needs at least three nodes".into(),
        ));
    }
    let scale = p
        .iter()
        .fold(1.0f64, |m, q| m.max(q.x.abs()).max(q.y.abs()));
    let edges = if closed { p.len() } else { p.len() - 1 };
    for i in 0..edges {
        let d = p[i].dist(p[(i + 1) % p.len()]);
        if !(d > SPACING_TOL * scale) {
            return Err(Error::Precondition(format!(
                "degenerate node spacing at edge {i}"
            )));
        }
    }
    Ok(())
}

/// Anisotropic curvature `(psi + psi'')(nu) kappa` at every node. Open-curve ends
/// use one-sided stencils. Positive on a counterclockwise circle.
pub fn aniso_curvature(
    points: &[Vec2],
    closed: bool,
    aniso: &SmoothAnisotropy,
) -> Result<Vec<f64>> {
    check_nodes(points, closed)?;
    Ok((0..points.len())
        .map(|k| {
            let (d1, d2) = derivatives(points, closed, k);
            let r = d1.norm();
            let nu = d1.perp() / r;
            aniso.stiffness(nu) * d2.dot(d1.perp()) / (r * r * r)
        })
        .collect())
}

/// Velocity `beta(nu) u_xx / |u_x|^2` of the special flow at node `k`.
fn node_velocity(p: &[Vec2], closed: bool, k: usize, aniso: &SmoothAnisotropy) -> Vec2 {
    let (d1, d2) = derivatives(p, closed, k);
    let r2 = d1.norm_sq();
    let nu = d1.perp() / r2.sqrt();
    d2 * (aniso.flow_coefficient(nu) / r2)
}

/// Neighbour node and sign of the end edge at a curve end: the end edge runs
/// from the junction to the neighbour for `Start` and back for `End`.
fn end_neighbour(p: &[Vec2], end: End) -> (Vec2, f64) {
    match end {
        End::Start => (p[1], -1.0),
        End::End => (p[p.len() - 2], 1.0),
    }
}

fn end_edge(q: Vec2, nb: Vec2, sign: f64) -> Vec2 {
    if sign < 0.0 {
        nb - q
    } else {
        q - nb
    }
}

/// `|sum_i N_i|` over the curve ends at a junction, with `N_i` the Cahn-Hoffman
/// vector of the end edge taken with the orientation pointing out of the junction.
pub fn herring_residual(net: &Network, table: &[Anisotropy], junction: usize) -> Result<f64> {
    let smooth = smooth_table(net, table)?;
    Ok(junction_gradient(net, &smooth, junction, net.junctions()[junction].point)?.norm())
}

/// Gradient of the end-edge energy with respect to the junction position, which
/// has the same norm as the Herring sum.
fn junction_gradient(
    net: &Network,
    smooth: &[SmoothAnisotropy],
    j: usize,
    q: Vec2,
) -> Result<Vec2> {
    let mut g = Vec2::ZERO;
    for e in &net.junctions()[j].ends {
        let p = &net.curve(e.curve).points;
        let (nb, s) = end_neighbour(p, e.end);
        let edge = end_edge(q, nb, s);
        let len = edge.norm();
        if !(len > 0.0) {
            return Err(Error::Precondition(format!(
                "zero end edge on curve {}",
                e.curve
            )));
        }
        let n = smooth[e.curve].dual_gradient(edge.perp() / len)?;
        g += n.perp_cw() * s;
    }
    Ok(g)
}

fn junction_energy(net: &Network, smooth: &[SmoothAnisotropy], j: usize, q: Vec2) -> f64 {
    net.junctions()[j]
        .ends
        .iter()
        .map(|e| {
            let (nb, s) = end_neighbour(&net.curve(e.curve).points, e.end);
            smooth[e.curve].dual_value(end_edge(q, nb, s).perp())
        })
        .sum()
}

fn junction_hessian(
    net: &Network,
    smooth: &[SmoothAnisotropy],
    j: usize,
    q: Vec2,
) -> [[f64; 2]; 2] {
    let mut h = [[0.0; 2]; 2];
    for e in &net.junctions()[j].ends {
        let (nb, s) = end_neighbour(&net.curve(e.curve).points, e.end);
        let edge = end_edge(q, nb, s);
        let len = edge.norm();
        let nu = edge.perp() / len;
        let k = smooth[e.curve].stiffness(nu) / len;
        h[0][0] += k * nu.x * nu.x;
        h[0][1] += k * nu.x * nu.y;
        h[1][1] += k * nu.y * nu.y;
    }
    h[1][0] = h[0][1];
    h
}

/// Uses the end-edge one-sided velocity `beta u_xx / |u_x|^2` of each incident curve
/// and returns the largest pairwise difference.
pub fn compatibility_residual(net: &Network, table: &[Anisotropy], junction: usize) -> Result<f64> {
    let smooth = smooth_table(net, table)?;
    let mut v = Vec::new();
    for e in &net.junctions()[junction].ends {
        let p = &net.curve(e.curve).points;
        check_nodes(p, false)?;
        let k = match e.end {
            End::Start => 0,
            End::End => p.len() - 1,
        };
        v.push(node_velocity(p, false, k, &smooth[e.curve]));
    }
    let mut worst = 0.0f64;
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            worst = worst.max(v[a].dist(v[b]));
        }
    }
    Ok(worst)
}

/// Damped Newton solve placing the junction at the minimizer of its end-edge
/// energy, which drives the Herring residual below `tol`.
fn solve_junction(net: &Network, smooth: &[SmoothAnisotropy], j: usize, tol: f64) -> Result<Vec2> {
    let mut q = net.junctions()[j].point;
    let mut energy = junction_energy(net, smooth, j, q);
    for _ in 0..100 {
        let g = junction_gradient(net, smooth, j, q)?;
        if g.norm() <= tol {
            return Ok(q);
        }
        let h = junction_hessian(net, smooth, j, q);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut step = if det > 1e-14 * (h[0][0] + h[1][1]).powi(2) {
            Vec2::new(
                -(h[1][1] * g.x - h[0][1] * g.y) / det,
                -(-h[1][0] * g.x + h[0][0] * g.y) / det,
            )
        } else {
            -g / (h[0][0] + h[1][1]).max(1.0)
        };
        let slope = g.dot(step);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = q + step;
            let e = junction_energy(net, smooth, j, trial);
            if e.is_finite() && e <= energy + 1e-4 * slope {
                q = trial;
                energy = e;
                accepted = true;
                break;
            }
            step = step * 0.5;
        }
        if !accepted {
            break;
        }
    }
    let g = junction_gradient(net, smooth, j, q)?;
    if g.norm() <= tol {
        Ok(q)
    } else {
        Err(Error::JunctionSolve {
            junction: j,
            residual: g.norm(),
        })
    }
}

fn move_junction(points: &mut [Vec<Vec2>], net: &Network, j: usize, q: Vec2) {
    for e in &net.junctions()[j].ends {
        let p = &mut points[e.curve];
        match e.end {
            End::Start => p[0] = q,
            End::End => *p.last_mut().unwrap() = q,
        }
    }
}

/// Moves every junction to the balanced position with all other nodes fixed.
pub fn enforce_herring(net: &Network, table: &[Anisotropy], tol: f64) -> Result<Network> {
    let smooth = smooth_table(net, table)?;
    project_junctions(net.clone(), &smooth, tol)
}

fn project_junctions(mut net: Network, smooth: &[SmoothAnisotropy], tol: f64) -> Result<Network> {
    for j in 0..net.junctions().len() {
        let q = solve_junction(&net, smooth, j, tol)?;
        let mut points: Vec<Vec<Vec2>> = net.curves().iter().map(|c| c.points.clone()).collect();
        move_junction(&mut points, &net, j, q);
        net = net.with_points(points)?;
    }
    Ok(net)
}

/// Redistributes nodes uniformly in arclength along the current polygon, keeping
/// the node count and the first (and, for open curves, last) node.
pub fn resample_arclength(points: &[Vec2], closed: bool) -> Vec<Vec2> {
    let n = points.len();
    let edges = if closed { n } else { n - 1 };
    let mut cum = Vec::with_capacity(edges + 1);
    cum.push(0.0);
    for i in 0..edges {
        cum.push(cum[i] + points[i].dist(points[(i + 1) % n]));
    }
    let total = cum[edges];
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if !closed && k == n - 1 {
            out.push(points[n - 1]);
            break;
        }
        let s = total * k as f64 / edges as f64;
        while seg + 1 < edges && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg].lerp(points[(seg + 1) % n], t));
    }
    out
}

/// Anisotropic length of the bounded part of a network.
pub fn energy(net: &Network, table: &[Anisotropy]) -> Result<f64> {
    let mut total = 0.0;
    for c in net.curves() {
        let a = table
            .get(c.anisotropy)
            .ok_or_else(|| Error::InvalidNetwork(format!("curve {} has no anisotropy", c.id)))?;
        let n = c.points.len();
        for i in 0..c.bounded_segments() {
            let e = c.points[(i + 1) % n] - c.points[i];
            let len = e.norm();
            if len > 0.0 {
                total += a.dual_value(e.perp() / len)? * len;
            }
        }
    }
    Ok(total)
}

pub fn min_edge(net: &Network) -> f64 {
    net.curves()
        .iter()
        .flat_map(|c| {
            let n = c.points.len();
            (0..c.bounded_segments()).map(move |i| c.points[i].dist(c.points[(i + 1) % n]))
        })
        .fold(f64::INFINITY, f64::min)
}

fn max_flow_coefficient(smooth: &[SmoothAnisotropy]) -> f64 {
    let mut m = 0.0f64;
    for a in smooth {
        for k in 0..1024 {
            let nu = Vec2::from_angle(std::f64::consts::TAU * k as f64 / 1024.0);
            m = m.max(a.flow_coefficient(nu));
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub tol_herring: f64,
    pub resample: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            tol_herring: 1e-8,
            resample: false,
        }
    }
}

/// One explicit step: interior update, optional resampling, junction projection.
pub fn flow_step(
    net: &Network,
    table: &[Anisotropy],
    dt: f64,
    opts: StepOptions,
) -> Result<Network> {
    let smooth = smooth_table(net, table)?;
    step_with(net, &smooth, dt, opts)
}

fn step_with(
    net: &Network,
    smooth: &[SmoothAnisotropy],
    dt: f64,
    opts: StepOptions,
) -> Result<Network> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Precondition(format!(
            "time step {dt} must be positive"
        )));
    }
    for c in net.curves() {
        check_nodes(&c.points, c.closed)?;
    }
    let points: Vec<Vec<Vec2>> = net
        .curves()
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let p = &c.points;
            let a = &smooth[i];
            let mut out = p.clone();
            let inner = if c.closed { 0..p.len() } else { 1..p.len() - 1 };
            for k in inner {
                out[k] = p[k] + node_velocity(p, c.closed, k, a) * dt;
            }
            if opts.resample {
                out = resample_arclength(&out, c.closed);
            }
            out
        })
        .collect();
    let moved = net.with_points(points)?;
    project_junctions(moved, smooth, opts.tol_herring)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowDiagnostics {
    pub time: f64,
    pub energy: f64,
    pub herring: f64,
    pub compatibility: f64,
    pub min_edge: f64,
    /// `-(E(t) - E(t - dt)) / dt` over the last accepted step; 0 at the start.
    pub dissipation: f64,
}

pub fn diagnostics(
    net: &Network,
    table: &[Anisotropy],
    time: f64,
    dissipation: f64,
) -> Result<FlowDiagnostics> {
    let mut herring = 0.0f64;
    let mut compatibility = 0.0f64;
    for j in 0..net.junctions().len() {
        herring = herring.max(herring_residual(net, table, j)?);
        compatibility = compatibility.max(compatibility_residual(net, table, j)?);
    }
    Ok(FlowDiagnostics {
        time,
        energy: energy(net, table)?,
        herring,
        compatibility,
        min_edge: min_edge(net),
        dissipation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dt_safety: f64,
    pub tol_herring: f64,
    /// Largest initial Herring residual accepted by [`run_flow`].
    pub tol_herring0: f64,
    /// Resample by arclength every this many steps; 0 disables.
    pub resample_every: usize,
    /// Record a snapshot every this many accepted steps; 0 keeps only the ends.
    pub snapshot_every: usize,
    pub max_steps: usize,
    /// Edge-collapse threshold relative to the initial smallest edge.
    pub collapse_ratio: f64,
    /// Initial compatibility residual above which a warning is logged.
    pub compatibility_warn: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_safety: 0.25,
            tol_herring: 1e-8,
            tol_herring0: 1e-6,
            resample_every: 10,
            snapshot_every: 100,
            max_steps: 10_000_000,
            collapse_ratio: 1e-2,
            compatibility_warn: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub points: Vec<Vec<Vec2>>,
    pub diagnostics: FlowDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowEvent {
    EdgeCollapse {
        curve: usize,
        edge: usize,
        length: f64,
        time: f64,
    },
    StepLimit {
        steps: usize,
        time: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    /// `(time, energy)` after every accepted step, starting at time 0.
    pub energy_log: Vec<(f64, f64)>,
    pub steps: usize,
    pub rejected: usize,
    /// Steps accepted although energy rose by more than the relative slack.
    pub energy_violations: usize,
    pub event: Option<FlowEvent>,
    pub last: Network,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.energy_log.last().map_or(0.0, |e| e.0)
    }

    /// Rebuilds a network from a snapshot.
    pub fn network_at(&self, initial: &Network, snapshot: usize) -> Result<Network> {
        initial.with_points(self.snapshots[snapshot].points.clone())
    }
}

const ENERGY_SLACK: f64 = 1e-10;

fn collapsed_edge(net: &Network, eps: f64) -> Option<(usize, usize, f64)> {
    for (ci, c) in net.curves().iter().enumerate() {
        let n = c.points.len();
        for i in 0..c.bounded_segments() {
            let d = c.points[i].dist(c.points[(i + 1) % n]);
            if d < eps {
                return Some((ci, i, d));
            }
        }
    }
    None
}

fn snapshot(net: &Network, d: FlowDiagnostics) -> Snapshot {
    Snapshot {
        time: d.time,
        points: net.curves().iter().map(|c| c.points.clone()).collect(),
        diagnostics: d,
    }
}

/// Integrates the flow up to `t_end` or the first singularity event.
pub fn run_flow(
    net: &Network,
    table: &[Anisotropy],
    t_end: f64,
    config: &FlowConfig,
) -> Result<Trajectory> {
    let smooth = smooth_table(net, table)?;
    if !(t_end >= 0.0) {
        return Err(Error::Precondition(format!(
            "final time {t_end} must be nonnegative"
        )));
    }
    for c in net.curves() {
        check_nodes(&c.points, c.closed)?;
    }
    let d0 = diagnostics(net, table, 0.0, 0.0)?;
    if d0.herring > config.tol_herring0 {
        return Err(Error::Precondition(format!(
            "initial Herring residual {:e} exceeds {:e}",
            d0.herring, config.tol_herring0
        )));
    }
    if d0.compatibility > config.compatibility_warn {
        log::warn!("initial compatibility residual {:e}", d0.compatibility);
    }
    let beta_max = max_flow_coefficient(&smooth);
    let eps_len = config.collapse_ratio * d0.min_edge;
    let mut cur = project_junctions(net.clone(), &smooth, config.tol_herring)?;
    let mut t = 0.0;
    let mut e_cur = energy(&cur, table)?;
    let mut traj = Trajectory {
        snapshots: vec![snapshot(
            &cur,
            FlowDiagnostics {
                energy: e_cur,
                ..d0
            },
        )],
        energy_log: vec![(0.0, e_cur)],
        steps: 0,
        rejected: 0,
        energy_violations: 0,
        event: None,
        last: cur.clone(),
    };
    let mut last_diss = 0.0;
    while t < t_end {
        if traj.steps >= config.max_steps {
            traj.event = Some(FlowEvent::StepLimit {
                steps: traj.steps,
                time: t,
            });
            break;
        }
        let h = min_edge(&cur);
        let mut dt = (config.dt_safety * h * h / beta_max).min(t_end - t);
        let resample = config.resample_every > 0 && (traj.steps + 1) % config.resample_every == 0;
        let opts = StepOptions {
            tol_herring: config.tol_herring,
            resample,
        };
        let mut halvings = 0;
        let (next, e_next) = loop {
            match step_with(&cur, &smooth, dt, opts) {
                Ok(next) => {
                    let e = energy(&next, table)?;
                    if e <= e_cur + ENERGY_SLACK * e_cur.abs() || halvings >= 10 {
                        if e > e_cur + ENERGY_SLACK * e_cur.abs() {
                            traj.energy_violations += 1;
                            log::warn!("energy increased by {:e} at t = {t}", e - e_cur);
                        }
                        break (next, e);
                    }
                }
                Err(err @ (Error::JunctionSolve { .. } | Error::InvalidNetwork(_))) => {
                    if halvings >= 10 {
                        return Err(err);
                    }
                }
                Err(err) => return Err(err),
            }
            traj.rejected += 1;
            halvings += 1;
            dt *= 0.5;
        };
        t = if dt >= t_end - t { t_end } else { t + dt };
        last_diss = -(e_next - e_cur) / dt;
        cur = next;
        e_cur = e_next;
        traj.steps += 1;
        traj.energy_log.push((t, e_cur));
        if let Some((curve, edge, length)) = collapsed_edge(&cur, eps_len) {
            traj.event = Some(FlowEvent::EdgeCollapse {
                curve,
                edge,
                length,
                time: t,
            });
            break;
        }
        if config.snapshot_every > 0 && traj.steps % config.snapshot_every == 0 && t < t_end {
            traj.snapshots
                .push(snapshot(&cur, diagnostics(&cur, table, t, last_diss)?));
        }
    }
    if traj.steps > 0 {
        traj.snapshots
            .push(snapshot(&cur, diagnostics(&cur, table, t, last_diss)?));
    }
    traj.last = cur;
    Ok(traj)
}

type Map = Arc<dyn Fn(f64) -> Vec2 + Send + Sync>;

/// A curve `sigma: [0, 1] -> R^2` with its first two derivatives.
#[derive(Clone)]
pub struct ParametricCurve {
    pub anisotropy: usize,
    pub position: Map,
    pub velocity: Map,
    pub acceleration: Map,
    pub closed: bool,
}

impl std::fmt::Debug for ParametricCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricCurve")
            .field("anisotropy", &self.anisotropy)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

impl ParametricCurve {
    /// Counterclockwise circle starting at angle `phase`.
    pub fn circle(anisotropy: usize, center: Vec2, radius: f64, phase: f64) -> Self {
        use std::f64::consts::TAU;
        Self {
            anisotropy,
            position: Arc::new(move |x| center + Vec2::from_angle(phase + TAU * x) * radius),
            velocity: Arc::new(move |x| Vec2::from_angle(phase + TAU * x).perp() * (TAU * radius)),
            acceleration: Arc::new(move |x| {
                Vec2::from_angle(phase + TAU * x) * (-TAU * TAU * radius)
            }),
            closed: true,
        }
    }

    /// Circular arc of signed radius through angles `a0 -> a1` around `center`.
    pub fn arc(anisotropy: usize, center: Vec2, radius: f64, a0: f64, a1: f64) -> Self {
        let w = a1 - a0;
        Self {
            anisotropy,
            position: Arc::new(move |x| center + Vec2::from_angle(a0 + w * x) * radius),
            velocity: Arc::new(move |x| Vec2::from_angle(a0 + w * x).perp() * (w * radius)),
            acceleration: Arc::new(move |x| Vec2::from_angle(a0 + w * x) * (-w * w * radius)),
            closed: false,
        }
    }

    pub fn segment(anisotropy: usize, a: Vec2, b: Vec2) -> Self {
        Self {
            anisotropy,
            position: Arc::new(move |x| a.lerp(b, x)),
            velocity: Arc::new(move |_| b - a),
            acceleration: Arc::new(|_| Vec2::ZERO),
            closed: false,
        }
    }

    pub fn sample(&self, nodes: usize) -> Vec<Vec2> {
        let den = if self.closed { nodes } else { nodes - 1 } as f64;
        (0..nodes)
            .map(|k| (self.position)(k as f64 / den))
            .collect()
    }
}

/// Curve ends meeting at a common point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricJunction {
    pub ends: Vec<(usize, End)>,
}

#[derive(Debug, Clone)]
pub struct ParametricNetwork {
    pub curves: Vec<ParametricCurve>,
    pub junctions: Vec<ParametricJunction>,
}

/// Perturbation field `beta` along one curve together with its derivative.
#[derive(Clone)]
pub struct Perturbation {
    pub value: Map,
    pub derivative: Map,
}

impl std::fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Perturbation")
    }
}

impl Perturbation {
    pub fn zero() -> Self {
        Self::constant(Vec2::ZERO)
    }

    pub fn constant(v: Vec2) -> Self {
        Self {
            value: Arc::new(move |_| v),
            derivative: Arc::new(|_| Vec2::ZERO),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstVariation {
    pub finite_difference: f64,
    pub formula: f64,
    /// Richardson error estimate of the finite difference.
    pub fd_error: f64,
}

const PANELS: usize = 64;
const GAUSS_POINTS: usize = 10;

fn quadrature<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (x, w) = gauss_legendre(GAUSS_POINTS);
    let h = 1.0 / PANELS as f64;
    let mut sum = 0.0;
    for p in 0..PANELS {
        let a = p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += wi * f(a + 0.5 * h * (xi + 1.0));
        }
    }
    0.5 * h * sum
}

fn perturbed_length(
    net: &ParametricNetwork,
    smooth: &[&SmoothAnisotropy],
    pert: &[Perturbation],
    s: f64,
) -> f64 {
    net.curves
        .iter()
        .zip(pert)
        .zip(smooth)
        .map(|((c, b), a)| {
            quadrature(|x| a.dual_value(((c.velocity)(x) + (b.derivative)(x) * s).perp()))
        })
        .sum()
}

/// Finite-difference derivative of the anisotropic length along `sigma + s beta`
/// at `s = 0`, next to the first-variation formula
/// `sum_i [ -int beta.nu kappa^phi ds + beta . N^perp_cw |_0^1 ]`.
pub fn first_variation_check(
    net: &ParametricNetwork,
    table: &[Anisotropy],
    pert: &[Perturbation],
) -> Result<FirstVariation> {
    if pert.len() != net.curves.len() {
        return Err(Error::Precondition(
            "one perturbation per curve is required".into(),
        ));
    }
    let mut smooth = Vec::with_capacity(net.curves.len());
    for (i, c) in net.curves.iter().enumerate() {
        let a = table
            .get(c.anisotropy)
            .and_then(Anisotropy::as_smooth)
            .ok_or_else(|| {
                Error::WrongAnisotropyKind(format!("curve {i} needs a smooth anisotropy"))
            })?;
        smooth.push(a);
    }
    let at = |e: End| if e == End::Start { 0.0 } else { 1.0 };
    for (j, jn) in net.junctions.iter().enumerate() {
        let Some(&(c0, e0)) = jn.ends.first() else {
            continue;
        };
        let b0 = (pert[c0].value)(at(e0));
        for &(c, e) in &jn.ends[1..] {
            if (pert[c].value)(at(e)).dist(b0) > 1e-12 * (1.0 + b0.norm()) {
                return Err(Error::MismatchedPerturbation(j));
            }
        }
    }
    let mut formula = 0.0;
    for ((c, b), a) in net.curves.iter().zip(pert).zip(&smooth) {
        formula -= quadrature(|x| {
            let d1 = (c.velocity)(x);
            let d2 = (c.acceleration)(x);
            let r = d1.norm();
            let nu = d1.perp() / r;
            let kappa = a.stiffness(nu) * d2.dot(d1.perp()) / (r * r * r);
            (b.value)(x).dot(nu) * kappa * r
        });
        if !c.closed {
            for (x, sign) in [(0.0, -1.0), (1.0, 1.0)] {
                let nu = (c.velocity)(x).perp().normalized();
                let n = a.dual_gradient(nu)?;
                formula += sign * (b.value)(x).dot(n.perp_cw());
            }
        }
    }
    let centered = |h: f64| {
        (perturbed_length(net, &smooth, pert, h) - perturbed_length(net, &smooth, pert, -h))
            / (2.0 * h)
    };
    let h = 1e-3;
    let coarse = centered(h);
    let fine = centered(h / 2.0);
    let rich = (4.0 * fine - coarse) / 3.0;
    Ok(FirstVariation {
        finite_difference: rich,
        formula,
        fd_error: (rich - fine).abs(),
    })
}

/// Samples a parametric network into a [`Network`] of sampled curves.
pub fn sample_network(net: &ParametricNetwork, nodes: usize) -> Result<Network> {
    use crate::network::{Curve, CurveEnd, Junction};
    let curves: Vec<Curve> = net
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut cv = Curve::polyline(format!("c{i}"), c.anisotropy, c.sample(nodes)).sampled();
            if c.closed {
                cv = cv.closed();
            }
            cv
        })
        .collect();
    let junctions = net
        .junctions
        .iter()
        .map(|j| {
            let (c, e) = j.ends[0];
            Junction {
                point: curves[c].end_point(e),
                ends: j
                    .ends
                    .iter()
                    .map(|&(curve, end)| CurveEnd { curve, end })
                    .collect(),
            }
        })
        .collect();
    Network::new(curves, junctions)
}

/// Theta network of two circular arcs and a straight chord between `(-1, 0)` and
/// `(1, 0)`, leaving the junctions at 120 degrees.
pub fn theta_arcs() -> ParametricNetwork {
    use std::f64::consts::PI;
    let r = 1.0 / (2.0 * PI / 3.0).sin();
    let c = (r * r - 1.0).sqrt();
    let p = Vec2::new(-1.0, 0.0);
    let q = Vec2::new(1.0, 0.0);
    // upper arc from P clockwise over the top to Q, lower arc mirrored
    let a0 = (p - Vec2::new(0.0, c)).angle();
    let a1 = (q - Vec2::new(0.0, c)).angle();
    let upper = ParametricCurve::arc(0, Vec2::new(0.0, c), r, a0, a1 - 2.0 * PI);
    let b0 = (p - Vec2::new(0.0, -c)).angle();
    let b1 = (q - Vec2::new(0.0, -c)).angle();
    let lower = ParametricCurve::arc(0, Vec2::new(0.0, -c), r, b0, b1 + 2.0 * PI);
    ParametricNetwork {
        curves: vec![upper, ParametricCurve::segment(0, p, q), lower],
        junctions: vec![
            ParametricJunction {
                ends: vec![(0, End::Start), (1, End::Start), (2, End::Start)],
            },
            ParametricJunction {
                ends: vec![(0, End::End), (1, End::End), (2, End::End)],
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Curve, CurveEnd, Junction};

    fn euclid() -> Vec<Anisotropy> {
        vec![Anisotropy::Smooth(
            SmoothAnisotropy::euclidean(1.0).unwrap(),
        )]
    }

    #[test]
    fn circle_curvature() {
        let c = ParametricCurve::circle(0, Vec2::ZERO, 2.0, 0.3).sample(400);
        let k = aniso_curvature(&c, true, &SmoothAnisotropy::euclidean(1.0).unwrap()).unwrap();
        for v in k {
            assert!((v - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn straight_line_has_zero_curvature() {
        let p: Vec<Vec2> = (0..10)
            .map(|k| Vec2::new(k as f64, 2.0 * k as f64))
            .collect();
        let a = SmoothAnisotropy::cosine(1.0, 0.05, 3.0).unwrap();
        assert!(aniso_curvature(&p, false, &a)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn degenerate_spacing_rejected() {
        let p = vec![Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(aniso_curvature(&p, false, &SmoothAnisotropy::euclidean(1.0).unwrap()).is_err());
    }

    #[test]
    fn resampling_is_uniform() {
        let p = vec![Vec2::ZERO, Vec2::new(0.1, 0.0), Vec2::new(3.0, 0.0)];
        let r = resample_arclength(&p, false);
        assert_eq!(r[1], Vec2::new(1.5, 0.0));
        assert_eq!(r[2], p[2]);
    }

    fn triod(weights: [f64; 3], angles: [f64; 3]) -> (Network, Vec<Anisotropy>) {
        let curves = (0..3)
            .map(|i| {
                let d = Vec2::from_angle(angles[i].to_radians());
                let pts = (0..5).map(|k| d * (k as f64 / 4.0)).collect();
                Curve::polyline(format!("c{i}"), i, pts).sampled()
            })
            .collect();
        let ends = (0..3)
            .map(|curve| CurveEnd {
                curve,
                end: End::Start,
            })
            .collect();
        let net = Network::new(
            curves,
            vec![Junction {
                point: Vec2::ZERO,
                ends,
            }],
        )
        .unwrap();
        let table = weights
            .iter()
            .map(|&w| Anisotropy::Smooth(SmoothAnisotropy::euclidean(w).unwrap()))
            .collect();
        (net, table)
    }

    #[test]
    fn herring_at_120_degrees() {
        let (net, table) = triod([1.0; 3], [90.0, 210.0, 330.0]);
        assert!(herring_residual(&net, &table, 0).unwrap() < 1e-12);
        let (net, table) = triod([1.0, 1.0, 3.0], [90.0, 210.0, 330.0]);
        assert!(herring_residual(&net, &table, 0).unwrap() >= 1.0);
    }

    #[test]
    fn herring_right_angle_junction() {
        // outgoing directions 90, 225, 315: normals sum to (0, 1 - sqrt 2)
        let (net, table) = triod([1.0; 3], [90.0, 225.0, 315.0]);
        let r = herring_residual(&net, &table, 0).unwrap();
        assert!((r - (2f64.sqrt() - 1.0)).abs() < 1e-12, "{r}");
    }

    #[test]
    fn straight_triod_is_fixed() {
        let (net, table) = triod([1.0; 3], [90.0, 210.0, 330.0]);
        assert_eq!(compatibility_residual(&net, &table, 0).unwrap(), 0.0);
        let next = flow_step(&net, &table, 0.01, StepOptions::default()).unwrap();
        for (a, b) in net.curves().iter().zip(next.curves()) {
            for (p, q) in a.points.iter().zip(&b.points) {
                assert!(p.dist(*q) < 1e-12);
            }
        }
    }

    #[test]
    fn projection_balances_junction() {
        let (net, table) = triod([1.0; 3], [90.0, 200.0, 330.0]);
        let fixed = enforce_herring(&net, &table, 1e-10).unwrap();
        assert!(herring_residual(&fixed, &table, 0).unwrap() < 1e-10);
        assert!(energy(&fixed, &table).unwrap() < energy(&net, &table).unwrap());
    }

    #[test]
    fn first_variation_of_translation_vanishes() {
        let net = ParametricNetwork {
            curves: vec![ParametricCurve::circle(0, Vec2::ZERO, 1.0, 0.0)],
            junctions: vec![],
        };
        let table = vec![Anisotropy::Smooth(
            SmoothAnisotropy::cosine(1.0, 0.1, 2.0).unwrap(),
        )];
        let fv = first_variation_check(
            &net,
            &table,
            &[Perturbation::constant(Vec2::new(0.3, -0.2))],
        )
        .unwrap();
        assert!(
            fv.finite_difference.abs() < 1e-8 && fv.formula.abs() < 1e-8,
            "{fv:?}"
        );
        let _ = euclid();
    }
}
