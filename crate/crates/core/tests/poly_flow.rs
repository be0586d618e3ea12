use netflow_core::crystalline::benchmarks::{hexagon_theta, octagon_triod, ThetaLengths};
use netflow_core::crystalline::{curvature_balance_residual, min_field};
use netflow_core::network::{is_parallel, End, Network, SegmentId};
use netflow_core::poly_flow::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stable_triod() -> (Network, Vec<netflow_core::anisotropy::Anisotropy>) {
    octagon_triod([1.0, 0.55, 1.0]).unwrap()
}

fn start(net: &Network) -> HeightState {
    HeightState {
        reference: net.clone(),
        time: 0.0,
        heights: vec![0.0; net.segment_count()],
        curvatures: vec![],
    }
}

#[test]
fn short_triod_run_dissipates_and_stays_parallel() {
    let (net, table) = stable_triod();
    let t = 0.01 * 0.55f64.powi(2);
    let cfg = PolyConfig {
        dt: t / 40.0,
        snapshot_every: 4,
        ..PolyConfig::default()
    };
    let tr = run_poly_flow(&net, &table, t, &cfg).unwrap();
    assert!(tr.event.is_none());
    assert_eq!(tr.final_time(), t);
    assert_eq!(tr.projections, 0);
    assert!(tr.snapshots.len() > 5);
    assert!(tr.all_parallel(&net));
    for w in tr.snapshots.windows(2) {
        assert!(
            w[1].energy <= w[0].energy * (1.0 + 1e-10),
            "{} -> {}",
            w[0].energy,
            w[1].energy
        );
    }
    for s in &tr.snapshots {
        assert!(s.constraint <= 1e-8);
        assert!(s.balance <= 1e-8);
    }
}

#[test]
fn first_step_follows_curvature_sign() {
    let (net, table) = stable_triod();
    let m = min_field(&net, &table).unwrap();
    let dt = 1e-3;
    let next = poly_step(&start(&net), &table, dt).unwrap();
    for (k, id) in net.segment_ids().enumerate() {
        let s = net.segment(id);
        let kappa = m.curvatures[k];
        let phi = table[0].dual_value(s.normal()).unwrap();
        let predicted = -dt * phi * kappa;
        assert!((next.heights[k] - predicted).abs() < 10.0 * dt * dt, "{k}");
        if kappa.abs() > 1e-12 {
            // moves along its normal exactly when the curvature is negative
            assert_eq!(next.heights[k] > 0.0, kappa < 0.0);
        } else {
            assert_eq!(next.heights[k], 0.0);
        }
    }
}

#[test]
fn straight_free_segment_is_a_fixed_point() {
    use netflow_core::anisotropy::{Anisotropy, CrystallinePolytope};
    use netflow_core::network::Curve;
    use netflow_core::Vec2;
    let table = vec![Anisotropy::Crystalline(
        CrystallinePolytope::regular(8, 1.0, 0.0).unwrap(),
    )];
    let net = Network::new(
        vec![Curve::polyline(
            "s",
            0,
            vec![Vec2::ZERO, Vec2::new(1.0, 0.0)],
        )],
        vec![],
    )
    .unwrap();
    let tr = run_poly_flow(
        &net,
        &table,
        0.1,
        &PolyConfig {
            dt: 0.01,
            ..PolyConfig::default()
        },
    )
    .unwrap();
    assert_eq!(tr.final_state.heights, vec![0.0]);
}

#[test]
fn unit_theta_middle_segment_stays_put() {
    let (net, table) = hexagon_theta(&ThetaLengths::unit()).unwrap();
    let middle = net.flat_index(SegmentId { curve: 1, index: 0 });
    let cfg = PolyConfig {
        dt: 1e-3,
        snapshot_every: 25,
        ..PolyConfig::default()
    };
    let tr = run_poly_flow(&net, &table, 0.5, &cfg).unwrap();
    assert!(tr.event.is_none());
    for s in &tr.snapshots {
        assert!(s.heights[middle].abs() < 1e-10);
        assert!(s.curvatures[middle].abs() < 1e-10);
    }
    assert!(tr.all_parallel(&net));
}

#[test]
fn unit_theta_collapses_middle_segment() {
    let (net, table) = hexagon_theta(&ThetaLengths::unit()).unwrap();
    let middle = net.flat_index(SegmentId { curve: 1, index: 0 });
    let cfg = PolyConfig {
        dt: 1e-3,
        snapshot_every: 0,
        ..PolyConfig::default()
    };
    let tr = run_poly_flow(&net, &table, 2.0, &cfg).unwrap();
    let ev = tr.event.expect("collapse");
    assert_eq!(ev.kind, PolyEventKind::SegmentCollapse);
    assert_eq!(ev.subject, Some(middle));
    assert!(ev.time > 0.7 && ev.time < 0.75, "{ev:?}");
}

#[test]
fn triod_eventually_loses_stability() {
    let (net, table) = stable_triod();
    let tr = run_poly_flow(
        &net,
        &table,
        5.0,
        &PolyConfig {
            dt: 1e-3,
            snapshot_every: 0,
            ..PolyConfig::default()
        },
    )
    .unwrap();
    let ev = tr.event.unwrap();
    assert_eq!(ev.kind, PolyEventKind::StabilityLoss);
    assert!(ev.time < 5.0);
    // the recorded time is a grid time
    assert!(((ev.time / 1e-3).round() * 1e-3 - ev.time).abs() < 1e-15);
}

#[test]
fn collapse_threshold_fires_event() {
    let (net, table) = hexagon_theta(&ThetaLengths::unit()).unwrap();
    let cfg = PolyConfig {
        dt: 1e-3,
        snapshot_every: 0,
        collapse_ratio: 0.5,
        ..PolyConfig::default()
    };
    let tr = run_poly_flow(&net, &table, 2.0, &cfg).unwrap();
    let ev = tr.event.unwrap();
    assert_eq!(ev.kind, PolyEventKind::SegmentCollapse);
    assert!(ev.value < 0.5);
    let last = tr.snapshots.last().unwrap();
    assert_eq!(last.time, ev.time);
}

/// New length of a segment from the affine dependence of its endpoints on the
/// heights of its carrier line and the neighbouring carrier lines.
fn affine_length(net: &Network, h: &[f64], id: SegmentId) -> f64 {
    let s = net.segment(id);
    let (d, n) = (s.direction, s.normal());
    let hj = h[net.flat_index(id)];
    let slide = |nb: SegmentId| {
        let t = net.segment(nb);
        let nt = t.normal();
        (h[net.flat_index(nb)] - hj * n.dot(nt)) / d.dot(nt)
    };
    let c = net.curve(id.curve);
    let neighbour = |end: End, inner: Option<usize>| -> SegmentId {
        match inner {
            Some(i) => SegmentId {
                curve: id.curve,
                index: i,
            },
            None => {
                let j = net.junction_at(id.curve, end).unwrap();
                let e = net.junctions()[j]
                    .ends
                    .iter()
                    .find(|e| !(e.curve == id.curve && e.end == end))
                    .unwrap();
                net.end_segment(e.curve, e.end)
            }
        }
    };
    let last = c.bounded_segments() - 1;
    let a = neighbour(End::Start, (id.index > 0).then(|| id.index - 1));
    let b = neighbour(End::End, (id.index < last).then(|| id.index + 1));
    s.length + slide(b) - slide(a)
}

#[test]
fn theta_first_step_lengths_match_affine_oracle() {
    let (net, table) = hexagon_theta(&ThetaLengths::unit()).unwrap();
    let next = poly_step(&start(&net), &table, 1e-3).unwrap();
    let rebuilt = netflow_core::network::rebuild_from_heights(&net, &next.heights).unwrap();
    for id in net.segment_ids() {
        let got = rebuilt.segment(id).length;
        let want = affine_length(&net, &next.heights, id);
        assert!((got - want).abs() < 1e-12, "{id}: {got} vs {want}");
    }
}

#[test]
fn constraint_residual_matches_direct_evaluation() {
    let (net, _) = stable_triod();
    let jn = &net.junctions()[0];
    // sin of the angle between the other two outgoing directions, signed by orientation
    let ang: Vec<f64> = jn
        .ends
        .iter()
        .map(|e| {
            net.outgoing_direction(e.curve, e.end)
                .y
                .atan2(net.outgoing_direction(e.curve, e.end).x)
        })
        .collect();
    let idx: Vec<usize> = jn
        .ends
        .iter()
        .map(|e| net.flat_index(net.end_segment(e.curve, e.end)))
        .collect();
    let sgn: Vec<f64> = jn
        .ends
        .iter()
        .map(|e| if e.end == End::Start { 1.0 } else { -1.0 })
        .collect();
    let w = |i: usize| (ang[(i + 2) % 3] - ang[(i + 1) % 3]).sin();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let h: Vec<f64> = (0..net.segment_count())
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect();
        let direct: f64 = (0..3).map(|i| w(i) * sgn[i] * h[idx[i]]).sum();
        assert!((height_constraint_residual(&net, &h) - direct.abs()).abs() < 1e-14);
    }
    // null vector built from two of the weights
    let mut h = vec![0.0; net.segment_count()];
    h[idx[0]] = 0.05 * w(1) * sgn[0];
    h[idx[1]] = -0.05 * w(0) * sgn[1];
    assert!(height_constraint_residual(&net, &h) < 1e-15);
    assert!(netflow_core::network::rebuild_from_heights(&net, &h).is_ok());
}

#[test]
fn balance_residual_on_perturbed_curvatures() {
    let (net, table) = stable_triod();
    let m = min_field(&net, &table).unwrap();
    assert!(curvature_balance_residual(&net, &table, &m.curvatures).unwrap() <= 1e-9);
    assert!(state_balance_residual(&start(&net), &table).unwrap() <= 1e-9);
    let mut k = m.curvatures.clone();
    let e = net.junctions()[0].ends[0];
    let seg = net.end_segment(e.curve, e.end);
    k[net.flat_index(seg)] += 0.25;
    let dirs: Vec<_> = net.junctions()[0]
        .ends
        .iter()
        .map(|e| net.outgoing_direction(e.curve, e.end))
        .collect();
    let weight = dirs[1].cross(dirs[2]);
    let sign = if e.end == End::Start { 1.0 } else { -1.0 };
    let phi = table[0].dual_value(net.segment(seg).normal()).unwrap();
    let want = (0.25 * sign * weight * phi).abs();
    let got = curvature_balance_residual(&net, &table, &k).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn snapshot_cadence_does_not_change_heights() {
    let (net, table) = stable_triod();
    let run = |every| {
        run_poly_flow(
            &net,
            &table,
            0.02,
            &PolyConfig {
                dt: 1e-3,
                snapshot_every: every,
                ..PolyConfig::default()
            },
        )
        .unwrap()
    };
    let a = run(2);
    let b = run(5);
    for sa in &a.snapshots {
        if let Some(sb) = b.snapshots.iter().find(|s| s.time == sa.time) {
            assert_eq!(sa.heights, sb.heights);
        }
    }
    assert_eq!(a.final_state.heights, b.final_state.heights);
}

#[test]
fn picard_and_rk4_orders() {
    let (net, table) = stable_triod();
    let t = 0.05;
    let rk = |dt: f64| {
        run_poly_flow(
            &net,
            &table,
            t,
            &PolyConfig {
                dt,
                snapshot_every: 0,
                ..PolyConfig::default()
            },
        )
        .unwrap()
        .final_state
        .heights
    };
    let reference = rk(t / 256.0);
    let err = |h: &[f64]| {
        h.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(&rk(t / 4.0)), err(&rk(t / 8.0)));
    assert!((e1 / e2).log2() >= 3.5, "rk4 {e1} {e2}");
    let p1 = picard_trajectory(&net, &table, t / 8.0, 8, 100, 1e-14).unwrap();
    let p2 = picard_trajectory(&net, &table, t / 16.0, 16, 100, 1e-14).unwrap();
    let (f1, f2) = (err(&p1[8]), err(&p2[16]));
    assert!((f1 / f2).log2() >= 0.9, "picard {f1} {f2}");
    // agreement over the first half of the horizon is O(dt)
    let half = run_poly_flow(
        &net,
        &table,
        t / 2.0,
        &PolyConfig {
            dt: t / 256.0,
            snapshot_every: 0,
            ..PolyConfig::default()
        },
    )
    .unwrap()
    .final_state
    .heights;
    let gap = p2[8]
        .iter()
        .zip(&half)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap < 2.0 * t / 16.0, "{gap}");
    assert!(
        is_parallel(
            &net,
            &netflow_core::network::rebuild_from_heights(&net, &p2[16]).unwrap()
        )
        .parallel
    );
}
