//! Replays a trace through graph construction, scheduled optimization,
//! correction smoothing and submap/octree mapping.

use nalgebra::Vector3;

use super::SimTrace;
use crate::geodesy::{EnuFrame, GeoPoint};
use crate::geometry::{Pose, Timestamp};
use crate::graph::{
    optimize, BackgroundOptimizer, ConstraintKind, GpsMeasurement, GraphError, OptimizationReport,
    OptimizationResult, PoseGraph, RelativeConstraint, SolverConfig,
};
use crate::mapping::{OccupancyOctree, OctreeParams, SubmapGrid, SubmapParams, CLOUD_THRESHOLD};
use crate::smoothing::{SmootherParams, SmootherState};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub smoother: SmootherParams,
    pub solver: SolverConfig,
    pub gps_enabled: bool,
    /// Add the compass heading as an orientation prior on node 0.
    pub orientation_prior: bool,
    pub orientation_prior_weight: f64,
    pub odom_translation_weight: f64,
    pub odom_rotation_weight: f64,
    /// Trace seconds between optimization starts.
    pub optimization_period: f64,
    /// Ticks between starting an optimization and merging its result.
    pub delay_ticks: usize,
    /// Optimize once more after the last tick; metrics use that result.
    pub final_optimization: bool,
    pub submap: SubmapParams,
    pub cloud_threshold: f64,
    pub octree: OctreeParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            smoother: SmootherParams::default(),
            solver: SolverConfig::default(),
            gps_enabled: true,
            orientation_prior: true,
            orientation_prior_weight: 10.0,
            odom_translation_weight: 20.0,
            odom_rotation_weight: 100.0,
            optimization_period: 60.0,
            delay_ticks: 0,
            final_optimization: true,
            submap: SubmapParams::default(),
            cloud_threshold: CLOUD_THRESHOLD,
            octree: OctreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSample {
    pub time: f64,
    /// Latest raw correction applied to the local pose.
    pub raw: Pose,
    /// Smoothed correction applied to the local pose.
    pub smoothed: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRecord {
    /// Trace time at which the result was merged.
    pub time: f64,
    pub nodes: usize,
    pub gps_constraints: usize,
    pub loop_closures: usize,
    pub report: OptimizationReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Over all nodes, final global poses against ground truth in the map frame.
    pub position_rmse: f64,
    /// Landing minus takeoff altitude of the final estimate.
    pub takeoff_landing_altitude_difference: f64,
    /// Estimated minus true landing-minus-takeoff altitude.
    pub landing_altitude_error: f64,
    /// End-to-start displacement error of dead reckoning, expressed in the
    /// first body frame.
    pub loop_gap_unoptimized: f64,
    pub loop_gap_optimized: f64,
    pub loop_gap_reduction_pct: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub samples: Vec<TickSample>,
    pub graph: PoseGraph,
    pub octree: OccupancyOctree,
    pub optimizations: Vec<OptimizationRecord>,
    /// GPS measurements fed to the graph, in the map frame.
    pub gps: Vec<GpsMeasurement>,
    /// Map frame origin when GPS is used.
    pub enu_origin: Option<GeoPoint>,
    /// Ground truth expressed in the map frame, per node.
    pub ground_truth_map: Vec<Pose>,
    pub metrics: Metrics,
}

struct Scheduler {
    optimizer: BackgroundOptimizer,
    started_at: usize,
    next_start: f64,
}

fn merge(
    graph: &mut PoseGraph,
    result: OptimizationResult,
    correction: &mut Pose,
    smoother: &mut SmootherState,
    now: f64,
    records: &mut Vec<OptimizationRecord>,
) {
    let nodes = result.poses.len();
    graph.merge_optimized(&result.poses, &result.correction);
    *correction = result.correction;
    *smoother = smoother.on_optimization_event(result.correction, Timestamp(now));
    records.push(OptimizationRecord {
        time: now,
        nodes,
        gps_constraints: graph
            .gps_constraints
            .iter()
            .filter(|c| c.node_after < nodes)
            .count(),
        loop_closures: graph
            .relative_constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::LoopClosure && c.to_id < nodes)
            .count(),
        report: result.report,
    });
}

fn loop_gap(first: &Pose, last: &Pose, gt_first: &Pose, gt_last: &Pose) -> f64 {
    let est = first.inverse().compose(last).translation;
    let truth = gt_first.inverse().compose(gt_last).translation;
    (est - truth).norm()
}

pub fn run_pipeline(trace: &SimTrace, cfg: &PipelineConfig) -> Result<RunArtifacts, GraphError> {
    let n = trace.times.len();
    let mut graph = PoseGraph::new();
    let mut correction = Pose::identity();
    let mut smoother = SmootherState::new(correction, cfg.smoother);
    let mut sched = Scheduler {
        optimizer: BackgroundOptimizer::new(),
        started_at: 0,
        next_start: cfg.optimization_period,
    };
    let mut records = Vec::new();
    let mut samples = Vec::with_capacity(n);

    let gps_frame = if cfg.gps_enabled {
        trace.gps.first().map(|f| EnuFrame::new(f.position))
    } else {
        None
    };
    let gps: Vec<GpsMeasurement> = match &gps_frame {
        Some(frame) => trace
            .gps
            .iter()
            .map(|f| GpsMeasurement {
                time: Timestamp(f.time),
                position_enu: frame.enu_of(&f.position),
                sigma_enu: f.sigma,
            })
            .collect(),
        None => Vec::new(),
    };
    let mut next_gps = 0;

    let mut loops: Vec<&RelativeConstraint> = trace.loop_events.iter().collect();
    loops.sort_by_key(|c| (c.to_id.max(c.from_id), c.from_id.min(c.to_id)));
    let mut next_loop = 0;
    let mut next_scan = 0;

    let mut octree = OccupancyOctree::new(cfg.octree);
    let mut submap: Option<SubmapGrid> = None;
    let mut submaps_done = 0;

    for k in 0..n {
        let t = trace.times[k];
        let local = trace.odometry[k];
        graph.add_node(Timestamp(t), local, correction.compose(&local))?;
        if k == 0 && cfg.orientation_prior && gps_frame.is_some() {
            graph.set_initial_orientation(trace.initial_heading, cfg.orientation_prior_weight)?;
        }
        if k > 0 {
            graph.add_relative_constraint(RelativeConstraint {
                from_id: k - 1,
                to_id: k,
                measured: trace.odometry[k - 1].inverse().compose(&local),
                translation_weight: cfg.odom_translation_weight,
                rotation_weight: cfg.odom_rotation_weight,
                kind: ConstraintKind::Odometry,
            })?;
        }
        while next_loop < loops.len() && loops[next_loop].to_id.max(loops[next_loop].from_id) <= k {
            graph.add_relative_constraint(*loops[next_loop])?;
            next_loop += 1;
        }
        // A fix attaches once a node at or after its time exists; bracketing
        // needs at least two nodes.
        while k > 0 && next_gps < gps.len() && gps[next_gps].time.0 <= t {
            graph.attach_gps(gps[next_gps])?;
            next_gps += 1;
        }

        while next_scan < trace.scans.len() && trace.scans[next_scan].tick <= k {
            let scan = &trace.scans[next_scan];
            next_scan += 1;
            let grid = submap.get_or_insert_with(|| SubmapGrid::new(submaps_done, local, cfg.submap));
            let to_submap = grid.origin.inverse().compose(&local);
            let pts: Vec<Vector3<f64>> = scan.points.iter().map(|p| to_submap.transform_point(p)).collect();
            grid.insert_scan(&pts).expect("active submap is unfinished");
            if grid.is_finished() {
                let grid = submap.take().expect("just inserted");
                let pose = correction.compose(&grid.origin);
                let cloud = grid.extract_cloud(&pose, cfg.cloud_threshold).expect("finished");
                octree.insert_cloud(&cloud, &pose.translation);
                submaps_done += 1;
            }
        }

        if !sched.optimizer.is_busy() && t >= sched.next_start {
            sched.optimizer.try_start(&graph, &cfg.solver);
            sched.started_at = k;
            while sched.next_start <= t {
                sched.next_start += cfg.optimization_period;
            }
        }
        if sched.optimizer.is_busy() && k >= sched.started_at + cfg.delay_ticks {
            let result = sched.optimizer.wait().expect("job in flight")?;
            merge(&mut graph, result, &mut correction, &mut smoother, t, &mut records);
        }

        samples.push(TickSample {
            time: t,
            raw: correction.compose(&local),
            smoothed: smoother.global_pose(&local, Timestamp(t)),
        });
    }

    let t_end = trace.times[n - 1];
    if let Some(result) = sched.optimizer.wait() {
        merge(&mut graph, result?, &mut correction, &mut smoother, t_end, &mut records);
    }
    if cfg.final_optimization && n > 1 {
        let result = optimize(&graph, &cfg.solver)?;
        merge(&mut graph, result, &mut correction, &mut smoother, t_end, &mut records);
    }
    if let Some(mut grid) = submap.take() {
        if grid.scans_inserted > 0 {
            grid.finish();
            let pose = correction.compose(&grid.origin);
            let cloud = grid.extract_cloud(&pose, cfg.cloud_threshold).expect("finished");
            octree.insert_cloud(&cloud, &pose.translation);
        }
    }
    octree.prune();

    // Ground truth in the map frame: through geodesy when GPS defines it,
    // otherwise aligned so that node 0 sits where the gauge holds it.
    let ground_truth_map: Vec<Pose> = match &gps_frame {
        Some(frame) => {
            let world = EnuFrame::new(trace.geo_origin);
            let origin = frame.enu_of(&world.geodetic_of(&Vector3::zeros()));
            let rot = nalgebra::Matrix3::from_columns(&[
                frame.enu_of(&world.geodetic_of(&Vector3::x())) - origin,
                frame.enu_of(&world.geodetic_of(&Vector3::y())) - origin,
                frame.enu_of(&world.geodetic_of(&Vector3::z())) - origin,
            ]);
            let frame_rot = crate::geometry::Rotation::from_unit(nalgebra::UnitQuaternion::from_matrix(&rot));
            trace
                .ground_truth
                .iter()
                .map(|g| {
                    Pose::new(
                        frame_rot.compose(&g.rotation),
                        frame.enu_of(&world.geodetic_of(&g.translation)),
                    )
                })
                .collect()
        }
        None => {
            let align = graph.nodes[0].global_pose.compose(&trace.ground_truth[0].inverse());
            trace.ground_truth.iter().map(|g| align.compose(g)).collect()
        }
    };

    let sq: f64 = graph
        .nodes
        .iter()
        .zip(&ground_truth_map)
        .map(|(node, g)| (node.global_pose.translation - g.translation).norm_squared())
        .sum();
    let first = &graph.nodes[0];
    let last = &graph.nodes[n - 1];
    let (g0, g1) = (&ground_truth_map[0], &ground_truth_map[n - 1]);
    let diff = last.global_pose.translation.z - first.global_pose.translation.z;
    let unopt = loop_gap(&first.local_pose, &last.local_pose, g0, g1);
    let opt = loop_gap(&first.global_pose, &last.global_pose, g0, g1);
    let metrics = Metrics {
        position_rmse: (sq / n as f64).sqrt(),
        takeoff_landing_altitude_difference: diff,
        landing_altitude_error: diff - (g1.translation.z - g0.translation.z),
        loop_gap_unoptimized: unopt,
        loop_gap_optimized: opt,
        loop_gap_reduction_pct: if unopt > 1e-6 { 100.0 * (1.0 - opt / unopt) } else { 0.0 },
    };

    Ok(RunArtifacts {
        samples,
        graph,
        octree,
        optimizations: records,
        gps,
        enu_origin: gps_frame.map(|f| *f.origin()),
        ground_truth_map,
        metrics,
    })
}
