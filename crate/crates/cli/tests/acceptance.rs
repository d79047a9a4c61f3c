//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p flightgraph-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flightgraph::config::RunConfig;
use flightgraph::geometry::Timestamp;
use flightgraph::graph::{
    gps_residual_jacobian, gps_weighted_cost, huber_loss, orientation_prior_residual,
    position_prior_residual, relative_residual_jacobian, ConstraintKind, GpsConstraint,
    GpsMeasurement, GpsWeighting, RelativeConstraint, WeightingMode,
};
use flightgraph::mapping::{
    OccupancyOctree, OctreeParams, SubmapCloud, SubmapGrid, SubmapParams, CLOUD_THRESHOLD,
};
use flightgraph::planning::{plan_rrt, shortcut, Path as PlanPath, PlanRequest};
use flightgraph::sim::{generate, run_pipeline};
use flightgraph::smoothing::{alpha, SmootherParams, SmootherState};
use flightgraph::{Pose, Rotation};
use flightgraph_cli::{cmd_plan, cmd_run, cmd_simulate, REPORT_FILE};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn scenario(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("flightgraph-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Smoothing weight at the default constants against 40-digit decimal
// evaluations of 1 / (1 + 1.5 exp(t - 3)).
fn smoothing_constants() -> Outcome {
    let p = SmootherParams::default();
    let reference = [
        (0.0, 0.930_509_025_309_967_3, 0.930513),
        (3.0, 0.4, 0.4),
        (7.0, 0.012_063_129_970_879_786, 0.012063),
    ];
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (t, exact, quoted) in reference {
        worst = worst.max((alpha(t, &p) - exact).abs());
        if (quoted - exact).abs() > 5e-7 {
            notes.push(format!("quoted {quoted} at t={t} differs from exact {exact:.7}"));
        }
    }
    let exact_mid = alpha(3.0, &p) == 0.4;
    let mut detail = format!("max |alpha - exact| = {worst:.1e}, alpha(3) == 0.4: {exact_mid}");
    if !notes.is_empty() {
        detail.push_str(&format!("; note: {}", notes.join(", ")));
    }
    check(worst < 1e-6 && exact_mid, detail)
}

fn step_suppression() -> Outcome {
    let p = SmootherParams::default();
    let new = Pose::from_translation(0.0, 0.0, 1.0);
    let hover = Pose::identity();
    let event = 5.0;
    let state = SmootherState::new(Pose::identity(), p).on_optimization_event(new, Timestamp(event));

    let (mut raw, mut smooth) = (Vec::new(), Vec::new());
    for k in 0..=200 {
        let t = k as f64 * 0.1;
        let (r, s) = if t < event {
            (hover, hover)
        } else {
            (new.compose(&hover), state.global_pose(&hover, Timestamp(t)))
        };
        raw.push(r.translation.z);
        smooth.push(s.translation.z);
    }
    let max_jump = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let (raw_jump, smooth_jump) = (max_jump(&raw), max_jump(&smooth));
    let at = |dt: f64| (state.global_pose(&hover, Timestamp(event + dt)).translation - new.translation).norm();
    let (e7, e10) = (at(7.0), at(10.0));
    check(
        (raw_jump - 1.0).abs() < 1e-12 && smooth_jump <= 0.0695 + 1e-6 && e7 <= 0.0121 && e10 <= 0.0007,
        format!("raw jump {raw_jump:.6}, smoothed jump {smooth_jump:.6}, residual at 7 s {:.4}%, at 10 s {:.4}%", e7 * 100.0, e10 * 100.0),
    )
}

fn loop_closure_benefit() -> Outcome {
    let settings = scenario("circle_loops.conf").settings().map_err(|e| e.to_string())?;
    let trace = generate(&settings.sim).map_err(|e| e.to_string())?;
    let run = run_pipeline(&trace, &settings.pipeline).map_err(|e| e.to_string())?;
    let m = &run.metrics;
    check(
        m.loop_gap_optimized <= 0.1 * m.loop_gap_unoptimized && m.loop_gap_unoptimized > 0.0,
        format!(
            "gap {:.4} m -> {:.4} m, reduction {:.1}%",
            m.loop_gap_unoptimized, m.loop_gap_optimized, m.loop_gap_reduction_pct
        ),
    )
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let t = Vector3::from_fn(|_, _| rng.gen_range(-20.0..20.0));
    Pose::new(Rotation::from_axis_angle(axis, rng.gen_range(0.0..3.0)), t)
}

/// Central differences over the stacked tangent `[dt; dtheta]` of `poses`.
fn finite_differences(poses: &[Pose], f: &dyn Fn(&[Pose]) -> DVector<f64>) -> DMatrix<f64> {
    const H: f64 = 1e-6;
    let mut j = DMatrix::zeros(f(poses).len(), 6 * poses.len());
    for pi in 0..poses.len() {
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = H;
            let (mut plus, mut minus) = (poses.to_vec(), poses.to_vec());
            plus[pi] = poses[pi].retract(&d);
            minus[pi] = poses[pi].retract(&-d);
            j.set_column(6 * pi + k, &((f(&plus) - f(&minus)) / (2.0 * H)));
        }
    }
    j
}

fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1.0)
}

fn jacobians() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let configs = 150;
    for _ in 0..configs {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let noise = Vector6::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        let rel = RelativeConstraint {
            from_id: 0,
            to_id: 1,
            measured: a.inverse().compose(&b).retract(&noise),
            translation_weight: rng.gen_range(0.1..50.0),
            rotation_weight: rng.gen_range(0.1..50.0),
            kind: ConstraintKind::LoopClosure,
        };
        let (_, ja, jb) = relative_residual_jacobian(&a, &b, &rel);
        let mut analytic = DMatrix::zeros(6, 12);
        analytic.view_mut((0, 0), (6, 6)).copy_from(&ja);
        analytic.view_mut((0, 6), (6, 6)).copy_from(&jb);
        let f = |p: &[Pose]| DVector::from_column_slice(relative_residual_jacobian(&p[0], &p[1], &rel).0.as_slice());
        worst = worst.max(relative_error(&analytic, &finite_differences(&[a, b], &f)));

        let gps = GpsConstraint {
            measurement: GpsMeasurement {
                time: Timestamp(0.0),
                position_enu: Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
                sigma_enu: Vector3::new(0.1, 0.2, 0.4),
            },
            node_before: 0,
            node_after: 1,
            beta: rng.gen_range(0.0..1.0),
        };
        let (_, ja, jb) = gps_residual_jacobian(&a, &b, &gps);
        let mut analytic = DMatrix::zeros(3, 12);
        analytic.view_mut((0, 0), (3, 6)).copy_from(&ja);
        analytic.view_mut((0, 6), (3, 6)).copy_from(&jb);
        let f = |p: &[Pose]| DVector::from_column_slice(gps_residual_jacobian(&p[0], &p[1], &gps).0.as_slice());
        worst = worst.max(relative_error(&analytic, &finite_differences(&[a, b], &f)));

        let target = a.retract(&Vector6::from_fn(|_, _| rng.gen_range(-0.8..0.8))).rotation;
        let w = rng.gen_range(0.1..100.0);
        let (_, j) = orientation_prior_residual(&a, &target, w);
        let analytic = DMatrix::from_column_slice(3, 6, j.as_slice());
        let f = |p: &[Pose]| DVector::from_column_slice(orientation_prior_residual(&p[0], &target, w).0.as_slice());
        worst = worst.max(relative_error(&analytic, &finite_differences(&[a], &f)));

        let anchor = Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
        let (_, j) = position_prior_residual(&a, &anchor, w);
        let analytic = DMatrix::from_column_slice(3, 6, j.as_slice());
        let f = |p: &[Pose]| DVector::from_column_slice(position_prior_residual(&p[0], &anchor, w).0.as_slice());
        worst = worst.max(relative_error(&analytic, &finite_differences(&[a], &f)));
    }
    check(worst < 1e-5, format!("{configs} configurations x 4 residual kinds, worst relative error {worst:.2e}"))
}

fn georeferencing() -> Outcome {
    let settings = scenario("georeference.conf").settings().map_err(|e| e.to_string())?;
    let trace = generate(&settings.sim).map_err(|e| e.to_string())?;
    let run = run_pipeline(&trace, &settings.pipeline).map_err(|e| e.to_string())?;
    let rmse = run.metrics.position_rmse;
    check(rmse < 0.05, format!("position RMSE {rmse:.4} m"))
}

fn weighting_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let affine = GpsWeighting { mode: WeightingMode::Affine, a: 1.0, b: 0.0, ..Default::default() };
    let inverse = GpsWeighting { mode: WeightingMode::InverseDiagonal, ..Default::default() };
    let iso = GpsWeighting { mode: WeightingMode::IsotropicMax, ..Default::default() };

    let mut affine_gap = 0.0f64;
    for _ in 0..100 {
        let r = Vector3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
        let sigma = Vector3::from_fn(|_, _| rng.gen_range(0.01..5.0));
        let d = gps_weighted_cost(&r, &sigma, &affine) - gps_weighted_cost(&r, &sigma, &inverse);
        affine_gap = affine_gap.max(d.amax());
    }

    let sigma = Vector3::new(1.0, 2.0, 4.0);
    let r = Vector3::new(0.3, -1.2, 2.5);
    let (iso0, inv0) = (gps_weighted_cost(&r, &sigma, &iso).norm(), gps_weighted_cost(&r, &sigma, &inverse).norm());
    let (mut iso_gap, mut inv_gap) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let axis = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let q = Rotation::from_axis_angle(axis, rng.gen_range(0.0..std::f64::consts::PI));
        let rr = q.rotate(&r);
        iso_gap = iso_gap.max((gps_weighted_cost(&rr, &sigma, &iso).norm() - iso0).abs());
        inv_gap = inv_gap.max((gps_weighted_cost(&rr, &sigma, &inverse).norm() - inv0).abs());
    }

    let mut huber_gap = 0.0f64;
    for delta in [0.1, 1.0, 2.5] {
        let (below, dbelow) = huber_loss(delta * delta, delta);
        let eps = 1e-9;
        let (above, dabove) = huber_loss((delta + eps) * (delta + eps), delta);
        // rho as a function of r: value continuity, and d rho / d r = 2 r rho'(s).
        let slope_below = 2.0 * delta * dbelow;
        let slope_above = 2.0 * (delta + eps) * dabove;
        huber_gap = huber_gap
            .max((below - delta * delta).abs())
            .max((above - below - 2.0 * delta * eps).abs())
            .max((slope_above - slope_below).abs());
    }
    check(
        affine_gap <= 1e-12 && iso_gap <= 1e-12 && inv_gap > 1e-12 && huber_gap <= 1e-12,
        format!(
            "affine vs inverse {affine_gap:.1e}, isotropic drift {iso_gap:.1e}, inverse-diagonal drift {inv_gap:.2}, huber gap {huber_gap:.1e}"
        ),
    )
}

fn altitude_sweep() -> Outcome {
    let base = scenario("gps_altitude_drift.conf");
    let mut errors = Vec::new();
    // b = 0 removes every GPS weight, which is the run without GPS.
    for (label, overrides) in [
        ("b=0", vec![("gps.enabled", "false")]),
        ("b=10", vec![("gps.weighting.b", "10")]),
        ("b=100", vec![("gps.weighting.b", "100")]),
    ] {
        let mut cfg = base.clone();
        cfg.apply(&overrides).map_err(|e| e.to_string())?;
        let settings = cfg.settings().map_err(|e| e.to_string())?;
        let trace = generate(&settings.sim).map_err(|e| e.to_string())?;
        let run = run_pipeline(&trace, &settings.pipeline).map_err(|e| e.to_string())?;
        errors.push((label, run.metrics.landing_altitude_error.abs()));
    }
    let ok = errors[0].1 <= 1e-3
        && errors.windows(2).all(|w| w[1].1 > w[0].1)
        && errors.iter().all(|(_, e)| *e <= 0.8);
    let detail = errors
        .iter()
        .map(|(l, e)| format!("{l}: {e:.4} m"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("landing altitude error {detail}"))
}

fn mapping() -> Outcome {
    // Hand-built low-resolution grid with 0.5 m voxels; centers are exact
    // in binary, so the expected cloud is exact.
    let params = SubmapParams { high_res_edge: 0.125, low_res_factor: 4, ..Default::default() };
    let mut grid = SubmapGrid::new(3, Pose::identity(), params);
    grid.low_res.set_probability([0, 0, 0], 0.9);
    grid.low_res.set_probability([1, 0, 0], CLOUD_THRESHOLD);
    grid.low_res.set_probability([0, 2, -1], 0.700_000_1);
    grid.low_res.set_probability([-1, -1, 0], 0.5);
    grid.low_res.set_probability([3, 1, 2], 0.2);
    grid.finish();
    let cloud = grid
        .extract_cloud(&Pose::from_translation(10.0, 20.0, 30.0), CLOUD_THRESHOLD)
        .map_err(|e| e.to_string())?;
    let expected = vec![Vector3::new(10.25, 20.25, 30.25), Vector3::new(10.25, 21.25, 29.75)];
    let cloud_ok = cloud.points == expected && cloud.submap_id == 3;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random_cloud = |rng: &mut ChaCha8Rng, id: usize| SubmapCloud {
        submap_id: id,
        points: (0..150).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-4.0..4.0))).collect(),
    };

    let mut tree = OccupancyOctree::new(OctreeParams { resolution: 0.25, ..Default::default() });
    for id in 0..6 {
        let c = random_cloud(&mut rng, id);
        tree.insert_cloud(&c, &Vector3::zeros());
    }
    tree.update_box(&Vector3::new(-3.0, -3.0, -3.0), &Vector3::new(-1.0, -1.0, -1.0), true);
    let probes: Vec<Vector3<f64>> = (0..1000).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0))).collect();
    let before: Vec<_> = probes.iter().map(|p| tree.query(p)).collect();
    let leaves_before = tree.leaf_count();
    tree.prune();
    let after: Vec<_> = probes.iter().map(|p| tree.query(p)).collect();
    let prune_ok = before == after && tree.leaf_count() < leaves_before;

    let hit_only = OctreeParams { resolution: 0.2, carve_free_space: false, ..Default::default() };
    let clouds: Vec<SubmapCloud> = (0..10).map(|id| random_cloud(&mut rng, id)).collect();
    let build = |order: &[SubmapCloud]| {
        let mut t = OccupancyOctree::new(hit_only);
        for c in order {
            t.insert_cloud(c, &Vector3::zeros());
        }
        t.prune();
        t.to_bytes()
    };
    let reference = build(&clouds);
    let mut shuffled = clouds.clone();
    let mut permutation_ok = true;
    for _ in 0..5 {
        shuffled.shuffle(&mut rng);
        permutation_ok &= build(&shuffled) == reference;
    }
    check(
        cloud_ok && prune_ok && permutation_ok,
        format!(
            "cloud exact: {cloud_ok}, prune {leaves_before} -> {} leaves with 1000 equal queries: {prune_ok}, 5 shuffles equal: {permutation_ok}",
            tree.leaf_count()
        ),
    )
}

/// 10 m cube of known free space at 0.1 m resolution, split by a 0.2 m wall
/// at x = 5 with a 1 m square gap centered at y = z = 5.
fn wall_with_gap() -> OccupancyOctree {
    let mut tree = OccupancyOctree::new(OctreeParams { resolution: 0.1, ..Default::default() });
    tree.update_box(&Vector3::zeros(), &Vector3::repeat(10.0), false);
    let wall = |tree: &mut OccupancyOctree, lo: [f64; 2], hi: [f64; 2]| {
        tree.update_box(&Vector3::new(4.9, lo[0], lo[1]), &Vector3::new(5.1, hi[0], hi[1]), true);
    };
    wall(&mut tree, [0.0, 0.0], [4.5, 10.0]);
    wall(&mut tree, [5.5, 0.0], [10.0, 10.0]);
    wall(&mut tree, [4.5, 0.0], [5.5, 4.5]);
    wall(&mut tree, [4.5, 5.5], [5.5, 10.0]);
    tree.prune();
    tree
}

fn segment_box_distance(a: &Vector3<f64>, b: &Vector3<f64>, center: &Vector3<f64>, half: f64) -> f64 {
    let dist = |u: f64| {
        let p = a + (b - a) * u;
        (p - center).abs().add_scalar(-half).sup(&Vector3::zeros()).norm()
    };
    // Distance to a convex box is convex along a line.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dist(m1) < dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist(0.5 * (lo + hi)).min(dist(0.0)).min(dist(1.0))
}

/// Independent collision check: every segment keeps `clearance` from every
/// occupied leaf-resolution voxel, and the path joins start to goal.
fn oracle_accepts(tree: &OccupancyOctree, boxes: &[Vector3<f64>], path: &PlanPath, req: &PlanRequest) -> bool {
    let half = tree.resolution() / 2.0;
    let w = &path.waypoints;
    if w.first() != Some(&req.start) || w.last() != Some(&req.goal) {
        return false;
    }
    w.windows(2).all(|s| {
        let (a, b) = (&s[0], &s[1]);
        let ab = b - a;
        boxes.iter().all(|c| {
            // Cheap reject: box center farther from the segment than its
            // circumradius plus clearance.
            let u = if ab.norm_squared() > 0.0 { ((c - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            if (a + ab * u - c).norm() > req.clearance + half * 3f64.sqrt() + 1e-9 {
                return true;
            }
            segment_box_distance(a, b, c, half) >= req.clearance
        })
    })
}

fn planner() -> Outcome {
    let tree = wall_with_gap();
    let boxes: Vec<Vector3<f64>> = tree.occupied_keys().iter().map(|k| tree.key_center(k)).collect();
    let request = |start: [f64; 3], goal: [f64; 3]| PlanRequest {
        clearance: 0.2,
        ..PlanRequest::new(start.into(), goal.into(), Vector3::zeros(), Vector3::repeat(10.0))
    };
    // The diagonal runs straight through the gap; the offset pair meets the
    // wall at (5, 5, 2.5) and has to search for the gap.
    let fixtures = [("diagonal", request([1.0, 1.0, 1.0], [9.0, 9.0, 9.0])), ("offset", request([1.0, 2.0, 2.0], [9.0, 8.0, 3.0]))];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, base) in &fixtures {
        let (mut found, mut rejected) = (0, 0);
        for seed in 0..100u64 {
            let req = PlanRequest { seed, ..base.clone() };
            if let Ok(path) = plan_rrt(&tree, &req) {
                found += 1;
                let short = shortcut(&path, &tree, req.clearance, req.allow_unknown, seed);
                if !oracle_accepts(&tree, &boxes, &path, &req) || !oracle_accepts(&tree, &boxes, &short, &req) {
                    rejected += 1;
                }
            }
        }
        ok &= found >= 95 && rejected == 0;
        detail.push(format!("{name}: {found}/100 found, {rejected} rejected by the oracle"));
    }

    let dir = scratch("plan");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let aok = dir.join("wall.aok");
    std::fs::write(&aok, tree.to_bytes()).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.apply(&[("seed", "17"), ("planner.clearance", "0.2")]).map_err(|e| e.to_string())?;
    let bounds = Some((Vector3::zeros(), Vector3::repeat(10.0)));
    let offset = &fixtures[1].1;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("path{i}.csv"));
        cmd_plan(&cfg, &aok, offset.start, offset.goal, bounds, &out).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let identical = outputs[0] == outputs[1];
    let _ = std::fs::remove_dir_all(&dir);
    detail.push(format!("fixed seed byte-identical: {identical}"));
    check(ok && identical, detail.join(", "))
}

fn list_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(Result::ok)
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

fn end_to_end_determinism() -> Outcome {
    let cfg = scenario("circle_loops.conf");
    let root = scratch("e2e");
    let mut bundles = Vec::new();
    for i in 0..2 {
        let (trace, run) = (root.join(format!("trace{i}")), root.join(format!("run{i}")));
        cmd_simulate(&cfg, &trace).map_err(|e| e.to_string())?;
        cmd_run(&cfg, &trace, &run).map_err(|e| e.to_string())?;
        bundles.push((list_files(&trace), list_files(&run)));
    }
    let report = String::from_utf8_lossy(
        &bundles[0].1.iter().find(|(n, _)| n == REPORT_FILE).map(|(_, b)| b.clone()).unwrap_or_default(),
    )
    .into_owned();
    let _ = std::fs::remove_dir_all(&root);
    let files = bundles[0].0.len() + bundles[0].1.len();
    let identical = bundles[0] == bundles[1] && files > 10;
    let has_metric = report.contains("loop_gap_reduction_pct");
    check(identical && has_metric, format!("{files} files byte-identical across two runs: {identical}, report has loop_gap_reduction_pct: {has_metric}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("smoothing constants", smoothing_constants, Duration::from_secs(1)),
        ("step suppression", step_suppression, Duration::from_secs(1)),
        ("loop-closure benefit", loop_closure_benefit, Duration::from_secs(10)),
        ("jacobian correctness", jacobians, Duration::from_secs(5)),
        ("georeferencing", georeferencing, Duration::from_secs(10)),
        ("weighting algebra", weighting_algebra, Duration::from_secs(5)),
        ("gps altitude drift sweep", altitude_sweep, Duration::from_secs(30)),
        ("mapping", mapping, Duration::from_secs(10)),
        ("planner", planner, Duration::from_secs(30)),
        ("end-to-end determinism", end_to_end_determinism, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {limit:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.2}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
