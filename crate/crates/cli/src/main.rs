use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flightgraph_cli::{cmd_compare, cmd_plan, cmd_run, cmd_simulate, load_config, CliError, POSE_SMOOTHED_FILE};
use nalgebra::Vector3;

/// Pose-graph backend scenarios: simulate a flight, replay it, plan in the
/// resulting map, and compare runs.
///
/// Exit codes: 0 ok, 2 invalid config or input, 3 write failure,
/// 4 solver gauge failure, 5 no path or invalid plan endpoints.
#[derive(Parser)]
#[command(name = "flightgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file (`key = value` lines). Defaults apply otherwise.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set gps.weighting.b=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Series {
    Raw,
    Smoothed,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace bundle.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for the trace bundle.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Replay a trace bundle through the backend.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trace bundle directory written by `simulate`.
        #[arg(long, short)]
        trace: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Shortcut for `--set gps.enabled=...`.
        #[arg(long, value_enum)]
        gps: Option<OnOff>,
    },
    /// Plan a collision-free path through a binary octree.
    Plan {
        #[command(flatten)]
        config: ConfigArgs,
        /// Octree file (`octree.aok` from a run).
        #[arg(long)]
        octree: PathBuf,
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true, value_parser = parse_point)]
        start: Vector3<f64>,
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true, value_parser = parse_point)]
        goal: Vector3<f64>,
        /// Sampling box corners; defaults to the known map extent.
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true, value_parser = parse_point, requires = "bounds_max")]
        bounds_min: Option<Vector3<f64>>,
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true, value_parser = parse_point, requires = "bounds_min")]
        bounds_max: Option<Vector3<f64>>,
        /// Waypoint CSV output.
        #[arg(long, short, default_value = "path.csv")]
        out: PathBuf,
    },
    /// Merge pose series of several runs into one long-format CSV.
    Compare {
        /// Run directories; at least two.
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "smoothed")]
        series: Series,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_point(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("`{c}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers X,Y,Z, got `{s}`")),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            cmd_simulate(&cfg, &out)?;
            println!("trace written to {}", out.display());
        }
        Command::Run { config, trace, out, gps } => {
            let mut overrides = config.overrides;
            if let Some(g) = gps {
                let v = if matches!(g, OnOff::On) { "true" } else { "false" };
                overrides.push(("gps.enabled".into(), v.into()));
            }
            let cfg = load_config(config.config.as_deref(), &overrides)?;
            let run = cmd_run(&cfg, &trace, &out)?;
            let m = &run.metrics;
            println!(
                "position_rmse={} loop_gap_reduction_pct={} landing_altitude_error={}",
                m.position_rmse, m.loop_gap_reduction_pct, m.landing_altitude_error
            );
        }
        Command::Plan {
            config,
            octree,
            start,
            goal,
            bounds_min,
            bounds_max,
            out,
        } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            let bounds = bounds_min.zip(bounds_max);
            let path = cmd_plan(&cfg, &octree, start, goal, bounds, &out)?;
            println!("path length {} m, {} waypoints", path.length(), path.waypoints.len());
        }
        Command::Compare { dirs, series, out } => {
            let file = match series {
                Series::Raw => flightgraph_cli::POSE_RAW_FILE,
                Series::Smoothed => POSE_SMOOTHED_FILE,
            };
            let csv = cmd_compare(&dirs, file)?;
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|source| CliError::Write { path: p, source })?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
