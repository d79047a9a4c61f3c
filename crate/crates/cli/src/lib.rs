//! Command implementations behind the `flightgraph` binary.
//!
//! Each command returns `Ok` or a [`CliError`] whose [`CliError::exit_code`]
//! is the process status:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | invalid configuration, unreadable input, or mismatched compare inputs |
//! | 3 | an output file could not be written |
//! | 4 | the solver could not fix the graph gauge |
//! | 5 | no path found, or invalid plan endpoints |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flightgraph::config::RunConfig;
use flightgraph::geometry::{pose_csv_row, POSE_CSV_HEADER};
use flightgraph::graph::{write_graph_text, GraphError};
use flightgraph::mapping::{OccupancyOctree, OctreeFormatError};
use flightgraph::planning::{plan_rrt, shortcut, Path as PlanPath, PlanError, PlanRequest};
use flightgraph::sim::{generate, read_trace, run_pipeline, write_trace, RunArtifacts, TraceError};
use flightgraph::Timestamp;
use nalgebra::Vector3;
use thiserror::Error;

/// Version of the file layouts written by these commands.
pub const FORMAT_VERSION: u32 = 1;

pub const POSE_RAW_FILE: &str = "pose_raw.csv";
pub const POSE_SMOOTHED_FILE: &str = "pose_smoothed.csv";
pub const RUN_GPS_FILE: &str = "gps.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const OCTREE_TEXT_FILE: &str = "octree.txt";
pub const OCTREE_BINARY_FILE: &str = "octree.aok";
pub const GRAPH_FILE: &str = "graph.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

const RUN_GPS_HEADER: &str = "t,e,n,u,se,sn,su";
const ERRORS_HEADER: &str = "t,ex,ey,ez,position_error";
const COMPARE_HEADER: &str = "variant,t,x,y,z";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] flightgraph::config::ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Gauge(GraphError),
    #[error("{0}")]
    Plan(#[from] PlanError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Write { .. } => 3,
            CliError::Gauge(_) => 4,
            CliError::Plan(_) => 5,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnderConstrained | GraphError::Disconnected(_) => CliError::Gauge(e),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Default configuration, optionally overlaid by a file, then by
/// `key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let pairs: Vec<(&str, &str)> = overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    cfg.apply(&pairs)?;
    Ok(cfg)
}

/// Manifest text: metadata comments followed by the effective config, so
/// the file itself loads as a config reproducing the run.
pub fn manifest(kind: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = format!("# flightgraph {kind}\n# format_version = {FORMAT_VERSION}\n");
    let _ = writeln!(s, "# seed = {}", cfg.get("seed").unwrap_or("0"));
    let _ = writeln!(s, "# config_hash = {}", cfg.hash());
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s.push_str(&cfg.to_text());
    s
}

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| CliError::Write { path, source })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

/// Generates a synthetic trace and writes it with its manifest into `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let settings = cfg.settings()?;
    let trace = generate(&settings.sim).map_err(|e| CliError::Input(e.to_string()))?;
    create_dir(out)?;
    write_trace(out, &trace, &manifest("trace", cfg, &[])).map_err(|e| match e {
        TraceError::Io { file, source } => CliError::Write {
            path: out.join(file),
            source,
        },
        other => CliError::Input(other.to_string()),
    })
}

fn report(cfg: &RunConfig, run: &RunArtifacts) -> String {
    let m = &run.metrics;
    let loops = run
        .graph
        .relative_constraints
        .iter()
        .filter(|c| c.kind == flightgraph::graph::ConstraintKind::LoopClosure)
        .count();
    let mut s = String::new();
    let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(s, "config_hash = {}", cfg.hash());
    let _ = writeln!(s, "nodes = {}", run.graph.len());
    let _ = writeln!(s, "gps_constraints = {}", run.graph.gps_constraints.len());
    let _ = writeln!(s, "loop_closures = {loops}");
    let _ = writeln!(s, "optimizations = {}", run.optimizations.len());
    let _ = writeln!(s, "position_rmse = {}", m.position_rmse);
    let _ = writeln!(s, "takeoff_landing_altitude_difference = {}", m.takeoff_landing_altitude_difference);
    let _ = writeln!(s, "landing_altitude_error = {}", m.landing_altitude_error);
    let _ = writeln!(s, "loop_gap_unoptimized = {}", m.loop_gap_unoptimized);
    let _ = writeln!(s, "loop_gap_optimized = {}", m.loop_gap_optimized);
    let _ = writeln!(s, "loop_gap_reduction_pct = {}", m.loop_gap_reduction_pct);
    let _ = writeln!(s, "octree_leaves = {}", run.octree.leaf_count());
    for (i, o) in run.optimizations.iter().enumerate() {
        let _ = writeln!(
            s,
            "optimization {i} time={} nodes={} gps={} loops={} iterations={} initial_cost={} final_cost={} converged={}",
            o.time,
            o.nodes,
            o.gps_constraints,
            o.loop_closures,
            o.report.iterations,
            o.report.initial_cost,
            o.report.final_cost,
            o.report.converged
        );
    }
    s
}

/// Replays the trace in `trace_dir` and writes every run artifact to `out`.
/// `gps.csv` is written only when GPS is enabled.
pub fn cmd_run(cfg: &RunConfig, trace_dir: &Path, out: &Path) -> Result<RunArtifacts, CliError> {
    let settings = cfg.settings()?;
    let trace = read_trace(trace_dir).map_err(|e| CliError::Input(format!("{}: {e}", trace_dir.display())))?;
    let run = run_pipeline(&trace, &settings.pipeline)?;

    create_dir(out)?;
    let mut raw = format!("{POSE_CSV_HEADER}\n");
    let mut smoothed = raw.clone();
    for s in &run.samples {
        let _ = writeln!(raw, "{}", pose_csv_row(Timestamp(s.time), &s.raw));
        let _ = writeln!(smoothed, "{}", pose_csv_row(Timestamp(s.time), &s.smoothed));
    }
    let mut errors = format!("{ERRORS_HEADER}\n");
    for (node, truth) in run.graph.nodes.iter().zip(&run.ground_truth_map) {
        let e = node.global_pose.translation - truth.translation;
        let _ = writeln!(errors, "{},{},{},{},{}", node.time.0, e.x, e.y, e.z, e.norm());
    }

    // A stale gps.csv from an earlier GPS run must not survive a GPS-off run.
    let gps_path = out.join(RUN_GPS_FILE);
    if settings.pipeline.gps_enabled {
        let mut gps = format!("{RUN_GPS_HEADER}\n");
        for g in &run.gps {
            let (p, s) = (&g.position_enu, &g.sigma_enu);
            let _ = writeln!(gps, "{},{},{},{},{},{},{}", g.time.0, p.x, p.y, p.z, s.x, s.y, s.z);
        }
        write(out, RUN_GPS_FILE, gps)?;
    } else if gps_path.exists() {
        fs::remove_file(&gps_path).map_err(|source| CliError::Write { path: gps_path, source })?;
    }

    // The trace is identified by its own config hash rather than its path,
    // so identical inputs give identical manifests wherever they live.
    let trace_hash = fs::read_to_string(trace_dir.join(flightgraph::sim::TRACE_MANIFEST_FILE))
        .ok()
        .and_then(|m| {
            m.lines()
                .find_map(|l| l.strip_prefix("# config_hash = ").map(str::to_string))
        })
        .unwrap_or_else(|| "unknown".into());
    let mut extra = vec![("trace_config_hash", trace_hash)];
    if let Some(o) = &run.enu_origin {
        extra.push(("enu_origin", format!("{},{},{}", o.latitude, o.longitude, o.altitude)));
    }
    write(out, POSE_RAW_FILE, raw)?;
    write(out, POSE_SMOOTHED_FILE, smoothed)?;
    write(out, ERRORS_FILE, errors)?;
    write(out, OCTREE_TEXT_FILE, run.octree.to_text())?;
    write(out, OCTREE_BINARY_FILE, run.octree.to_bytes())?;
    write(out, GRAPH_FILE, write_graph_text(&run.graph))?;
    write(out, REPORT_FILE, report(cfg, &run))?;
    write(out, MANIFEST_FILE, manifest("run", cfg, &extra))?;
    Ok(run)
}

/// Plan bounds: the explicit box, or the known map extent grown to contain
/// both endpoints.
fn plan_bounds(
    tree: &OccupancyOctree,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    bounds: Option<(Vector3<f64>, Vector3<f64>)>,
) -> (Vector3<f64>, Vector3<f64>) {
    if let Some(b) = bounds {
        return b;
    }
    let (mut lo, mut hi) = tree.known_bounds().unwrap_or((*start, *start));
    for p in [start, goal] {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = Vector3::repeat(tree.resolution());
    (lo - pad, hi + pad)
}

/// Plans from `start` to `goal` through the octree stored at `octree_path`
/// and writes the waypoints as CSV to `out`.
pub fn cmd_plan(
    cfg: &RunConfig,
    octree_path: &Path,
    start: Vector3<f64>,
    goal: Vector3<f64>,
    bounds: Option<(Vector3<f64>, Vector3<f64>)>,
    out: &Path,
) -> Result<PlanPath, CliError> {
    let settings = cfg.settings()?;
    let bytes = fs::read(octree_path).map_err(|e| CliError::Input(format!("{}: {e}", octree_path.display())))?;
    let tree = OccupancyOctree::from_bytes(&bytes, settings.pipeline.octree)
        .map_err(|e: OctreeFormatError| CliError::Input(format!("{}: {e}", octree_path.display())))?;
    let (bounds_min, bounds_max) = plan_bounds(&tree, &start, &goal, bounds);
    let p = &settings.planner;
    let req = PlanRequest {
        clearance: p.clearance,
        max_iterations: p.max_iterations,
        step: p.step,
        goal_tolerance: p.goal_tolerance,
        goal_bias: p.goal_bias,
        allow_unknown: p.allow_unknown,
        seed: settings.seed,
        ..PlanRequest::new(start, goal, bounds_min, bounds_max)
    };
    let mut path = plan_rrt(&tree, &req)?;
    if p.shortcut {
        path = shortcut(&path, &tree, p.clearance, p.allow_unknown, settings.seed);
    }
    let mut csv = format!("{}\n", PlanPath::CSV_HEADER);
    for row in path.csv_rows() {
        csv.push_str(&row);
        csv.push('\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(out, csv).map_err(|source| CliError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(path)
}

fn variant_name(dir: &Path, index: usize) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .filter(|n| !n.is_empty() && !n.contains(','))
        .unwrap_or_else(|| format!("run{index}"))
}

/// Merges one pose series from several run directories into a long-format
/// CSV with a `variant` column. All runs must share header and timestamps.
pub fn cmd_compare(dirs: &[PathBuf], series: &str) -> Result<String, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Input(format!("compare needs at least 2 run directories, got {}", dirs.len())));
    }
    let mut names: Vec<String> = dirs.iter().enumerate().map(|(i, d)| variant_name(d, i)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for (i, n) in names.iter_mut().enumerate() {
        if !seen.insert(n.clone()) {
            *n = format!("{n}#{i}");
        }
    }

    let mut out = format!("{COMPARE_HEADER}\n");
    let mut reference: Option<Vec<String>> = None;
    for (dir, name) in dirs.iter().zip(&names) {
        let file = dir.join(series);
        let text = fs::read_to_string(&file).map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let mut lines = text.lines();
        if lines.next() != Some(POSE_CSV_HEADER) {
            return Err(CliError::Input(format!("{}: header differs from `{POSE_CSV_HEADER}`", file.display())));
        }
        let mut times = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(CliError::Input(format!("{} line {}: expected 8 columns", file.display(), i + 2)));
            }
            times.push(cols[0].to_string());
            let _ = writeln!(out, "{name},{},{},{},{}", cols[0], cols[1], cols[2], cols[3]);
        }
        match &reference {
            None => reference = Some(times),
            Some(r) if *r != times => {
                return Err(CliError::Input(format!("{}: timestamps differ from {}", file.display(), dirs[0].display())))
            }
            Some(_) => {}
        }
    }
    Ok(out)
}
