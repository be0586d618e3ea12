//! Subcommand implementations. Each writes JSON to the given sink and returns a
//! [`CliError`] carrying the exit code on failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use netflow_core::anisotropy::{triangle_inequality_violation, Anisotropy};
use netflow_core::crystalline::{
    curvature_balance_residual, min_field, stability_margin, StabilityReport,
};
use netflow_core::network::{is_parallel, phi_length, Disc, Network};
use netflow_core::poly_flow::{picard_trajectory, run_poly_flow, PolyConfig};
use netflow_core::smooth_flow::{run_flow, FlowConfig};
use netflow_core::{Error, Vec2};
use serde_json::{json, Value};

use crate::io::{NetworkSpec, ReadError, SCHEMA};
use crate::svg::{render_svg, SvgOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Domain(Error),
    #[error("{0}")]
    Numerical(Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The run stopped at an event before its horizon.
    #[error("run stopped early: {0}")]
    Event(String),
    /// Validation found violations; the report has been written.
    #[error("network is invalid")]
    Invalid,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotStrictlyConvex(_)
            | Error::JunctionSolve { .. }
            | Error::Consistency(_)
            | Error::NonFinite(_)
            | Error::SegmentCollapsed { .. } => CliError::Numerical(e),
            _ => CliError::Domain(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) | CliError::Config(_) | CliError::Invalid => 1,
            CliError::Read(_) | CliError::Write { .. } => 2,
            CliError::Numerical(_) | CliError::Event(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Read(ReadError::Io { .. }) | CliError::Write { .. } => "io",
            CliError::Read(_) => "parse",
            CliError::Domain(Error::NotRegular(_)) => "not_regular",
            CliError::Domain(Error::WrongAnisotropyKind(_)) => "mode",
            CliError::Domain(Error::Precondition(_)) => "precondition",
            CliError::Domain(_) => "domain",
            CliError::Numerical(_) => "numerical",
            CliError::Config(_) => "config",
            CliError::Event(_) => "event",
            CliError::Invalid => "invalid",
        }
    }

    /// Structured form printed on stdout.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Read(ReadError::Parse { line, column, .. }) = self {
            err["line"] = json!(line);
            err["column"] = json!(column);
        }
        json!({ "schema": SCHEMA, "error": err })
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn emit(out: &mut dyn Write, v: &Value) -> CliResult {
    writeln!(out, "{v}").map_err(|source| CliError::Write {
        path: "<output>".into(),
        source,
    })
}

fn load(path: &str) -> CliResult<(NetworkSpec, Network, Vec<Anisotropy>)> {
    let spec = NetworkSpec::read(path)?;
    let table = spec.table()?;
    let net = spec.network()?;
    Ok((spec, net, table))
}

fn require_kind(net: &Network, table: &[Anisotropy], crystalline: bool) -> CliResult {
    for (i, c) in net.curves().iter().enumerate() {
        let a = table.get(c.anisotropy).ok_or_else(|| {
            Error::InvalidNetwork(format!(
                "curve {i} references unknown anisotropy {}",
                c.anisotropy
            ))
        })?;
        if a.is_crystalline() != crystalline {
            let want = if crystalline { "crystalline" } else { "smooth" };
            return Err(Error::WrongAnisotropyKind(format!(
                "curve {i} ({}) needs a {want} anisotropy",
                c.id
            ))
            .into());
        }
    }
    Ok(())
}

fn stability_json(s: &StabilityReport) -> Value {
    json!({
        "stable": s.stable,
        "margin": finite_or_null(s.margin),
        "junctions": s.junctions.iter().map(|j| json!({
            "junction": j.junction,
            "margin": j.margin,
            "flag": format!("{:?}", j.flag),
        })).collect::<Vec<_>>(),
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn points_json(net: &Network) -> Value {
    json!(net.curves().iter().map(|c| &c.points).collect::<Vec<_>>())
}

/// `validate`: topology and geometry checks. Exit 1 when violations are found.
pub fn validate(path: &str, out: &mut dyn Write) -> CliResult {
    let spec = NetworkSpec::read(path)?;
    let (violations, warnings) = match (spec.table(), spec.network()) {
        (Err(e), _) | (_, Err(e)) => (vec![e.to_string()], vec![]),
        (Ok(table), Ok(net)) => {
            let mut v: Vec<String> = net
                .validate()
                .violations
                .iter()
                .map(|v| v.to_string())
                .collect();
            for (i, c) in net.curves().iter().enumerate() {
                if c.anisotropy >= table.len() {
                    v.push(format!("curve {i} references an unknown anisotropy"));
                }
            }
            (v, triangle_warnings(&net, &table))
        }
    };
    let valid = violations.is_empty();
    emit(
        out,
        &json!({ "schema": SCHEMA, "valid": valid, "violations": violations, "warnings": warnings }),
    )?;
    if valid {
        Ok(())
    } else {
        Err(CliError::Invalid)
    }
}

fn triangle_warnings(net: &Network, table: &[Anisotropy]) -> Vec<String> {
    let mut w = Vec::new();
    for (j, jn) in net.junctions().iter().enumerate() {
        if jn.ends.len() != 3 {
            continue;
        }
        let a: Vec<_> = jn
            .ends
            .iter()
            .filter_map(|e| table.get(net.curve(e.curve).anisotropy))
            .collect();
        if a.len() == 3 {
            if let Some(v) = triangle_inequality_violation(a[0], a[1], a[2], 720) {
                w.push(format!(
                    "junction {j}: anisotropies violate the triangle inequality by {v:e}"
                ));
            }
        }
    }
    w
}

/// `curvature`: crystalline curvature of every segment, minimizing Cahn-Hoffman
/// values at the nodes and the stability report.
pub fn curvature(path: &str, out: &mut dyn Write) -> CliResult {
    let (_, net, table) = load(path)?;
    require_kind(&net, &table, true)?;
    let m = min_field(&net, &table)?;
    let stability = stability_margin(&m);
    let balance = curvature_balance_residual(&net, &table, &m.curvatures)?;
    let segments: Vec<Value> = net
        .segment_ids()
        .map(|id| {
            let s = net.segment(id);
            json!({
                "curve": id.curve,
                "segment": id.index,
                "curvature": m.curvatures[net.flat_index(id)],
                "length": if s.is_halfline() { Value::Null } else { json!(s.length) },
            })
        })
        .collect();
    let nodes: Vec<Value> = m
        .field
        .boundary
        .iter()
        .zip(&m.field.values)
        .map(|(b, v)| {
            json!(b
                .iter()
                .zip(v)
                .map(|(p, x)| json!({ "edge": p.edge, "offset": p.offset, "value": x }))
                .collect::<Vec<_>>())
        })
        .collect();
    emit(
        out,
        &json!({
            "schema": SCHEMA,
            "objective": m.objective,
            "variables": m.variables,
            "segments": segments,
            "nodes": nodes,
            "stability": stability_json(&stability),
            "balance": balance,
        }),
    )
}

/// `energy`: anisotropic length, restricted to a disc for unbounded networks.
pub fn energy(path: &str, radius: Option<f64>, center: Vec2, out: &mut dyn Write) -> CliResult {
    let (_, net, table) = load(path)?;
    let window = match radius {
        Some(r) if r > 0.0 && r.is_finite() => Some(Disc { center, radius: r }),
        Some(r) => {
            return Err(CliError::Config(format!(
                "radius must be positive, got {r}"
            )))
        }
        None => None,
    };
    let e = phi_length(&net, &table, window.as_ref())?;
    emit(
        out,
        &json!({
            "schema": SCHEMA,
            "energy": e,
            "bounded": net.is_bounded(),
            "window": window.map(|d| json!({ "center": d.center, "radius": d.radius })),
        }),
    )
}

/// `svg`: render the network described by a file.
pub fn svg(path: &str, options: &SvgOptions, out: &mut dyn Write) -> CliResult {
    let (_, net, table) = load(path)?;
    out.write_all(render_svg(&net, &table, options).as_bytes())
        .map_err(|source| CliError::Write {
            path: "<output>".into(),
            source,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Smooth,
    Crystalline,
}

/// Settings of an `evolve` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub t_end: f64,
    /// Fixed step of the crystalline flow.
    pub dt: f64,
    /// Step of the smooth flow relative to the parabolic limit.
    pub dt_safety: f64,
    pub tol_herring: f64,
    /// Largest Herring residual accepted in the initial data.
    pub tol_herring0: f64,
    pub resample_every: usize,
    pub snapshot_every: usize,
    pub picard_check: bool,
    pub fail_on_event: bool,
    pub svg_dir: Option<PathBuf>,
    pub svg: SvgOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let smooth = FlowConfig::default();
        Self {
            mode: Mode::Smooth,
            t_end: 0.0,
            dt: PolyConfig::default().dt,
            dt_safety: smooth.dt_safety,
            tol_herring: smooth.tol_herring,
            tol_herring0: smooth.tol_herring0,
            resample_every: smooth.resample_every,
            snapshot_every: 10,
            picard_check: false,
            fail_on_event: false,
            svg_dir: None,
            svg: SvgOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> CliResult {
        let positive = [
            ("dt", self.dt),
            ("dt-safety", self.dt_safety),
            ("tol-herring", self.tol_herring),
            ("tol-herring0", self.tol_herring0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!(
                    "--{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(CliError::Config(format!(
                "--T must be nonnegative, got {}",
                self.t_end
            )));
        }
        if !(self.svg.halfline_length > 0.0) {
            return Err(CliError::Config("render radius must be positive".into()));
        }
        Ok(())
    }
}

struct SvgSink {
    dir: Option<PathBuf>,
    count: usize,
}

impl SvgSink {
    fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|source| CliError::Write {
                path: d.display().to_string(),
                source,
            })?;
        }
        Ok(Self { dir, count: 0 })
    }

    fn write(&mut self, net: &Network, table: &[Anisotropy], opts: &SvgOptions) -> CliResult {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("snapshot_{:05}.svg", self.count));
        self.count += 1;
        fs::write(&path, render_svg(net, table, opts)).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        })
    }
}

/// `evolve`: JSON-lines trajectory followed by an event record (if any) and a summary.
pub fn evolve(path: &str, config: &RunConfig, out: &mut dyn Write) -> CliResult {
    config.check()?;
    let (_, net, table) = load(path)?;
    let report = net.validate();
    if !report.is_valid() {
        let v: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidNetwork(v.join("; ")).into());
    }
    match config.mode {
        Mode::Smooth => evolve_smooth(&net, &table, config, out),
        Mode::Crystalline => evolve_crystalline(&net, &table, config, out),
    }
}

fn evolve_smooth(
    net: &Network,
    table: &[Anisotropy],
    config: &RunConfig,
    out: &mut dyn Write,
) -> CliResult {
    require_kind(net, table, false)?;
    let fc = FlowConfig {
        dt_safety: config.dt_safety,
        tol_herring: config.tol_herring,
        tol_herring0: config.tol_herring0,
        resample_every: config.resample_every,
        snapshot_every: config.snapshot_every,
        ..FlowConfig::default()
    };
    let traj = run_flow(net, table, config.t_end, &fc)?;
    let mut svg = SvgSink::new(config.svg_dir.clone())?;
    for (k, s) in traj.snapshots.iter().enumerate() {
        emit(
            out,
            &json!({ "schema": SCHEMA, "type": "snapshot", "time": s.time, "points": s.points, "diagnostics": s.diagnostics }),
        )?;
        svg.write(&traj.network_at(net, k)?, table, &config.svg)?;
    }
    if let Some(ev) = &traj.event {
        emit(
            out,
            &json!({ "schema": SCHEMA, "type": "event", "event": ev }),
        )?;
    }
    emit(
        out,
        &json!({
            "schema": SCHEMA,
            "type": "summary",
            "mode": "smooth",
            "final_time": traj.final_time(),
            "steps": traj.steps,
            "rejected": traj.rejected,
            "energy_violations": traj.energy_violations,
            "event": traj.event,
            "energy": traj.snapshots.iter().map(|s| [s.time, s.diagnostics.energy]).collect::<Vec<_>>(),
        }),
    )?;
    match &traj.event {
        Some(ev) if config.fail_on_event => Err(CliError::Event(
            serde_json::to_string(ev).unwrap_or_default(),
        )),
        _ => Ok(()),
    }
}

fn evolve_crystalline(
    net: &Network,
    table: &[Anisotropy],
    config: &RunConfig,
    out: &mut dyn Write,
) -> CliResult {
    require_kind(net, table, true)?;
    let pc = PolyConfig {
        dt: config.dt,
        snapshot_every: config.snapshot_every,
        ..PolyConfig::default()
    };
    let traj = run_poly_flow(net, table, config.t_end, &pc)?;
    let mut svg = SvgSink::new(config.svg_dir.clone())?;
    for s in &traj.snapshots {
        emit(
            out,
            &json!({
                "schema": SCHEMA,
                "type": "snapshot",
                "time": s.time,
                "heights": s.heights,
                "points": points_json(&s.network),
                "curvatures": s.curvatures,
                "energy": s.energy,
                "constraint": s.constraint,
                "balance": s.balance,
                "parallel": is_parallel(net, &s.network).parallel,
                "stability": stability_json(&s.stability),
            }),
        )?;
        svg.write(&s.network, table, &config.svg)?;
    }
    if let Some(ev) = &traj.event {
        emit(
            out,
            &json!({ "schema": SCHEMA, "type": "event", "event": ev }),
        )?;
    }
    let picard = if config.picard_check && traj.steps > 0 {
        let path = picard_trajectory(net, table, config.dt, traj.steps, 200, 1e-13)?;
        let last = path.last().expect("nonempty Picard path");
        let diff = last
            .iter()
            .zip(&traj.final_state.heights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        json!({ "steps": traj.steps, "max_height_difference": diff })
    } else {
        Value::Null
    };
    emit(
        out,
        &json!({
            "schema": SCHEMA,
            "type": "summary",
            "mode": "crystalline",
            "final_time": traj.final_time(),
            "steps": traj.steps,
            "projections": traj.projections,
            "event": traj.event,
            "all_parallel": traj.all_parallel(net),
            "energy": traj.snapshots.iter().map(|s| [s.time, s.energy]).collect::<Vec<_>>(),
            "picard": picard,
        }),
    )?;
    match &traj.event {
        Some(ev) if config.fail_on_event => Err(CliError::Event(ev.message.clone())),
        _ => Ok(()),
    }
}
