//! Crystalline curvature flow of polygonal networks as an ODE on segment heights.
//!
//! The state is the vector of signed displacements of every carrier line of a fixed
//! reference network along its normal. The velocity of a segment is
//! `-phi°(nu) kappa`, with `kappa` computed on the network rebuilt from the heights.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::anisotropy::Anisotropy;
use crate::crystalline::{
    curvature_balance_residual, min_field, stability_margin, MinField, StabilityReport,
};
use crate::network::{is_parallel, phi_length, rebuild_from_heights, Disc, End, Network};
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone)]
pub struct HeightState {
    pub reference: Network,
    pub time: f64,
    /// One height per segment in flat order; half-lines stay at zero.
    pub heights: Vec<f64>,
    pub curvatures: Vec<f64>,
}

/// Coefficients `w_i sigma_i` of the concurrency relation at each triple junction:
/// the shifted carrier lines of the three end segments meet at one point iff
/// `sum_i c_i h_i = 0`.
fn constraint_rows(net: &Network) -> Vec<Vec<(usize, f64)>> {
    net.junctions()
        .iter()
        .filter(|j| j.ends.len() == 3)
        .map(|jn| {
            let dirs: Vec<Vec2> = jn
                .ends
                .iter()
                .map(|e| net.outgoing_direction(e.curve, e.end))
                .collect();
            jn.ends
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let w = dirs[(i + 1) % 3].cross(dirs[(i + 2) % 3]);
                    let sign = if e.end == End::Start { 1.0 } else { -1.0 };
                    (net.flat_index(net.end_segment(e.curve, e.end)), w * sign)
                })
                .collect()
        })
        .collect()
}

/// Largest `|sum_i h_i sin(theta_i)|` over triple junctions of the reference network.
pub fn height_constraint_residual(reference: &Network, heights: &[f64]) -> f64 {
    constraint_rows(reference)
        .iter()
        .map(|row| row.iter().map(|&(k, c)| c * heights[k]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Orthogonal projection of `heights` onto the null space of the junction relations.
pub fn project_heights(reference: &Network, heights: &[f64]) -> Vec<f64> {
    let rows = constraint_rows(reference);
    if rows.is_empty() {
        return heights.to_vec();
    }
    let a = DMatrix::from_fn(rows.len(), heights.len(), |r, c| {
        rows[r]
            .iter()
            .filter(|&&(k, _)| k == c)
            .map(|&(_, v)| v)
            .sum()
    });
    let h = DVector::from_column_slice(heights);
    let aat = &a * a.transpose();
    let rhs = &a * &h;
    let y = aat
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(rows.len()));
    (h - a.transpose() * y).iter().copied().collect()
}

/// Curvature balance on the network rebuilt from a state.
pub fn state_balance_residual(state: &HeightState, table: &[Anisotropy]) -> Result<f64> {
    let net = rebuild_from_heights(&state.reference, &state.heights)?;
    let m = min_field(&net, table)?;
    curvature_balance_residual(&net, table, &m.curvatures)
}

/// Velocity field `-phi°(nu) kappa` for each segment of a rebuilt network.
fn velocity(net: &Network, table: &[Anisotropy], m: &MinField) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(net.segment_count());
    for (k, id) in net.segment_ids().enumerate() {
        let s = net.segment(id);
        let a = &table[net.curve(id.curve).anisotropy];
        let kappa = m.curvatures[k];
        v.push(if s.is_halfline() || kappa == 0.0 {
            0.0
        } else {
            -a.dual_value(s.normal())? * kappa
        });
    }
    Ok(v)
}

struct Evaluation {
    net: Network,
    field: MinField,
    velocity: Vec<f64>,
}

fn evaluate(reference: &Network, table: &[Anisotropy], h: &[f64]) -> Result<Evaluation> {
    let net = rebuild_from_heights(reference, h)?;
    let field = min_field(&net, table)?;
    let velocity = velocity(&net, table, &field)?;
    Ok(Evaluation {
        net,
        field,
        velocity,
    })
}

fn axpy(h: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    h.iter().zip(v).map(|(x, y)| x + a * y).collect()
}

/// One classical RK4 step of the height ODE.
pub fn poly_step(state: &HeightState, table: &[Anisotropy], dt: f64) -> Result<HeightState> {
    let h = rk4(&state.reference, table, &state.heights, dt)?;
    let e = evaluate(&state.reference, table, &h)?;
    Ok(HeightState {
        reference: state.reference.clone(),
        time: state.time + dt,
        heights: h,
        curvatures: e.field.curvatures,
    })
}

fn rk4(reference: &Network, table: &[Anisotropy], h: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = evaluate(reference, table, h)?.velocity;
    let k2 = evaluate(reference, table, &axpy(h, 0.5 * dt, &k1))?.velocity;
    let k3 = evaluate(reference, table, &axpy(h, 0.5 * dt, &k2))?.velocity;
    let k4 = evaluate(reference, table, &axpy(h, dt, &k3))?.velocity;
    Ok((0..h.len())
        .map(|i| h[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyConfig {
    pub dt: f64,
    /// Record every this many steps; 0 keeps only the ends.
    pub snapshot_every: usize,
    /// Segment-collapse threshold relative to the initial smallest segment.
    pub collapse_ratio: f64,
    /// Stability-loss threshold relative to the initial margin.
    pub stability_ratio: f64,
    /// Constraint drift beyond which heights are projected back.
    pub constraint_tol: f64,
    /// Radius of the disc used for the energy of unbounded networks, relative to
    /// the reference scale.
    pub window_ratio: f64,
}

impl Default for PolyConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            snapshot_every: 10,
            collapse_ratio: 1e-6,
            stability_ratio: 1e-3,
            constraint_tol: 1e-9,
            window_ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyEventKind {
    SegmentCollapse,
    StabilityLoss,
    HeightRadiusExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyEvent {
    pub kind: PolyEventKind,
    pub time: f64,
    /// Flat segment index or junction index, when one is responsible.
    pub subject: Option<usize>,
    pub value: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct PolySnapshot {
    pub time: f64,
    pub heights: Vec<f64>,
    pub network: Network,
    pub curvatures: Vec<f64>,
    pub energy: f64,
    pub constraint: f64,
    pub balance: f64,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone)]
pub struct PolyTrajectory {
    pub snapshots: Vec<PolySnapshot>,
    pub event: Option<PolyEvent>,
    pub steps: usize,
    /// Steps after which heights had to be projected onto the junction relations.
    pub projections: usize,
    pub final_state: HeightState,
}

impl PolyTrajectory {
    pub fn final_time(&self) -> f64 {
        self.final_state.time
    }

    /// Whether every snapshot is parallel to the initial network.
    pub fn all_parallel(&self, initial: &Network) -> bool {
        self.snapshots
            .iter()
            .all(|s| is_parallel(initial, &s.network).parallel)
    }
}

fn window(reference: &Network, config: &PolyConfig) -> Option<Disc> {
    if reference.is_bounded() {
        return None;
    }
    let pts: Vec<Vec2> = reference
        .curves()
        .iter()
        .flat_map(|c| c.points.iter().copied())
        .collect();
    let center = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / pts.len().max(1) as f64;
    Some(Disc {
        center,
        radius: config.window_ratio * reference.scale(),
    })
}

fn min_segment(net: &Network) -> (usize, f64) {
    net.segment_ids()
        .enumerate()
        .map(|(k, id)| (k, net.segment(id).length))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

fn record(
    state: &HeightState,
    e: &Evaluation,
    table: &[Anisotropy],
    win: Option<&Disc>,
) -> Result<PolySnapshot> {
    Ok(PolySnapshot {
        time: state.time,
        heights: state.heights.clone(),
        network: e.net.clone(),
        curvatures: e.field.curvatures.clone(),
        energy: phi_length(&e.net, table, win)?,
        constraint: height_constraint_residual(&state.reference, &state.heights),
        balance: curvature_balance_residual(&e.net, table, &e.field.curvatures)?,
        stability: stability_margin(&e.field),
    })
}

fn event_from_error(err: &Error, time: f64, reference: &Network) -> Option<PolyEvent> {
    let message = err.to_string();
    match err {
        Error::SegmentCollapsed {
            curve,
            segment,
            length,
        } => Some(PolyEvent {
            kind: PolyEventKind::SegmentCollapse,
            time,
            subject: Some(reference.flat_index(crate::network::SegmentId {
                curve: *curve,
                index: *segment,
            })),
            value: *length,
            message,
        }),
        Error::IncompatibleHeights { junction, residual } => Some(PolyEvent {
            kind: PolyEventKind::HeightRadiusExceeded,
            time,
            subject: Some(*junction),
            value: *residual,
            message,
        }),
        Error::DegenerateIntersection(_) | Error::NotRegular(_) | Error::DegenerateJunction(_) => {
            Some(PolyEvent {
                kind: PolyEventKind::HeightRadiusExceeded,
                time,
                subject: None,
                value: f64::NAN,
                message,
            })
        }
        _ => None,
    }
}

/// Integrates the height ODE from `net0` with RK4 up to `t_end` or the first event.
pub fn run_poly_flow(
    net0: &Network,
    table: &[Anisotropy],
    t_end: f64,
    config: &PolyConfig,
) -> Result<PolyTrajectory> {
    if !(config.dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Precondition(
            "time step must be positive and horizon nonnegative".into(),
        ));
    }
    let mut state = HeightState {
        reference: net0.clone(),
        time: 0.0,
        heights: vec![0.0; net0.segment_count()],
        curvatures: vec![],
    };
    let e0 = evaluate(net0, table, &state.heights)?;
    let st0 = stability_margin(&e0.field);
    if !st0.stable {
        return Err(Error::Precondition(format!(
            "initial network is not stable (margin {})",
            st0.margin
        )));
    }
    state.curvatures = e0.field.curvatures.clone();
    let win = window(net0, config);
    let eps_len = config.collapse_ratio * min_segment(net0).1;
    let eps_stab = config.stability_ratio * st0.margin;
    let mut traj = PolyTrajectory {
        snapshots: vec![record(&state, &e0, table, win.as_ref())?],
        event: None,
        steps: 0,
        projections: 0,
        final_state: state.clone(),
    };
    let mut last = e0;
    let mut recorded = true;
    while state.time < t_end {
        // grid times k dt, computed directly so they do not accumulate rounding
        let next_time = ((traj.steps + 1) as f64 * config.dt).min(t_end);
        let dt = next_time - state.time;
        let step = rk4(net0, table, &state.heights, dt).and_then(|mut h| {
            if height_constraint_residual(net0, &h) > config.constraint_tol {
                log::warn!("junction relation drifted at t = {next_time}; projecting");
                h = project_heights(net0, &h);
                traj.projections += 1;
            }
            let e = evaluate(net0, table, &h)?;
            Ok((h, e))
        });
        let (h, e) = match step {
            Ok(v) => v,
            Err(err) => match event_from_error(&err, next_time, net0) {
                Some(ev) => {
                    traj.event = Some(ev);
                    break;
                }
                None => return Err(err),
            },
        };
        state = HeightState {
            reference: net0.clone(),
            time: next_time,
            heights: h,
            curvatures: e.field.curvatures.clone(),
        };
        traj.steps += 1;
        recorded = false;
        let (k, len) = min_segment(&e.net);
        let st = stability_margin(&e.field);
        let event = if len < eps_len {
            Some(PolyEvent {
                kind: PolyEventKind::SegmentCollapse,
                time: state.time,
                subject: Some(k),
                value: len,
                message: format!("segment {k} shorter than {eps_len:e}"),
            })
        } else if st.margin < eps_stab {
            Some(PolyEvent {
                kind: PolyEventKind::StabilityLoss,
                time: state.time,
                subject: st
                    .junctions
                    .iter()
                    .min_by(|a, b| a.margin.total_cmp(&b.margin))
                    .map(|j| j.junction),
                value: st.margin,
                message: format!("stability margin below {eps_stab:e}"),
            })
        } else {
            None
        };
        last = e;
        if event.is_some() || (config.snapshot_every > 0 && traj.steps % config.snapshot_every == 0)
        {
            traj.snapshots
                .push(record(&state, &last, table, win.as_ref())?);
            recorded = true;
        }
        if event.is_some() {
            traj.event = event;
            break;
        }
    }
    if !recorded {
        traj.snapshots
            .push(record(&state, &last, table, win.as_ref())?);
    }
    traj.final_state = state;
    Ok(traj)
}

/// Fixed point of the integral map `h(t) = -int_0^t phi° kappa(rebuild(h)) ds` on a
/// uniform grid with left-endpoint quadrature, found by Picard iteration. Returns
/// the heights at every grid time `k dt`, `k = 0..=steps`.
pub fn picard_trajectory(
    net0: &Network,
    table: &[Anisotropy],
    dt: f64,
    steps: usize,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = net0.segment_count();
    let mut path = vec![vec![0.0; n]; steps + 1];
    for _ in 0..max_iter {
        let mut next = vec![vec![0.0; n]; steps + 1];
        for k in 0..steps {
            let v = evaluate(net0, table, &path[k])?.velocity;
            next[k + 1] = axpy(&next[k], dt, &v);
        }
        let change = next
            .iter()
            .zip(&path)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        path = next;
        if change <= tol {
            return Ok(path);
        }
    }
    Err(Error::Consistency(format!(
        "Picard iteration did not settle in {max_iter} sweeps"
    )))
}
