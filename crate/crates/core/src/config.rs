//! Flat `key = value` run configuration with `#` comments.
//!
//! Every key has a default; a file only lists overrides. Unknown keys and
//! invalid values are rejected when the file is loaded, and errors name the
//! offending key. The effective configuration prints back as a file that
//! reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geodesy::GeoPoint;
use crate::geometry::{Pose, Rotation};
use crate::graph::{GpsWeighting, SolverConfig, WeightingMode};
use crate::mapping::{OctreeParams, SubmapParams};
use crate::sim::{Obstacle, PipelineConfig, SimConfig, TrajectorySpec};
use crate::smoothing::SmootherParams;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "42"),
    ("smoother.s", "1.5"),
    ("smoother.t_x_seconds", "3"),
    ("gps.enabled", "true"),
    ("gps.weighting.mode", "isotropic_max"),
    ("gps.weighting.a", "1"),
    ("gps.weighting.b", "0"),
    ("gps.huber_delta", "1"),
    ("gps.axis_mask", "1,1,1"),
    ("graph.orientation_prior", "true"),
    ("graph.orientation_prior_weight", "10"),
    ("graph.odom_translation_weight", "20"),
    ("graph.odom_rotation_weight", "100"),
    ("graph.loop_translation_weight", "10"),
    ("graph.loop_rotation_weight", "50"),
    ("solver.max_iterations", "50"),
    ("solver.initial_lambda", "0.0001"),
    ("solver.lambda_factor", "10"),
    ("solver.relative_tolerance", "1e-9"),
    ("solver.gauge_weight", "1000"),
    ("solver.delay_ticks", "0"),
    ("solver.final_optimization", "true"),
    ("map.high_res_edge", "0.1"),
    ("map.low_res_factor", "4"),
    ("map.submap_hit_probability", "0.65"),
    ("map.submap_min_log_odds", "-2"),
    ("map.submap_max_log_odds", "3.5"),
    ("map.scans_per_submap", "40"),
    ("map.cloud_threshold", "0.7"),
    ("map.octree_resolution", "0.2"),
    ("map.octree_hit_log_odds", "0.85"),
    ("map.octree_miss_log_odds", "-0.4"),
    ("map.octree_min_log_odds", "-2"),
    ("map.octree_max_log_odds", "3.5"),
    ("map.octree_occupied_threshold", "0"),
    ("map.octree_free_threshold", "0"),
    ("map.carve_free_space", "true"),
    ("planner.clearance", "0.2"),
    ("planner.step", "0.5"),
    ("planner.max_iterations", "10000"),
    ("planner.goal_bias", "0.1"),
    ("planner.goal_tolerance", "0.5"),
    ("planner.allow_unknown", "false"),
    ("planner.shortcut", "true"),
    ("sim.trajectory", "circle"),
    ("sim.circle.radius", "10"),
    ("sim.circle.height", "5"),
    ("sim.circle.angular_rate", "0.1"),
    ("sim.circle.laps", "1"),
    ("sim.waypoints", "0 0 1; 10 0 1"),
    ("sim.speed", "1"),
    ("sim.odom_rate", "10"),
    ("sim.gps_rate", "1"),
    ("sim.scan_rate", "2"),
    ("sim.gps_sigma", "0.05,0.05,0.1"),
    ("sim.gps_noise", "true"),
    ("sim.gps_altitude_drift", "0"),
    ("sim.gps_dropout", ""),
    ("sim.odom_drift", "0.01"),
    ("sim.odom_drift_yaw", "0.0001"),
    ("sim.odom_drift_direction", "0,0,1"),
    ("sim.odom_noise_translation", "0.002"),
    ("sim.odom_noise_rotation", "0.0002"),
    ("sim.heading_noise_deg", "1"),
    ("sim.loop_radius", "2"),
    ("sim.loop_min_gap", "20"),
    ("sim.loop_every", "10"),
    ("sim.loop_noise_translation", "0.02"),
    ("sim.loop_noise_rotation_deg", "0.2"),
    ("sim.optimization_period", "60"),
    ("sim.environment", "box -3 -3 0 3 3 8"),
    ("sim.lidar_range", "20"),
    ("sim.scan_spacing", "0.4"),
    ("sim.geo_origin", "45.8,15.97,120"),
    ("sim.hidden_offset", "0,0,0,0"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

impl ConfigError {
    /// The key an error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Module validators start their messages with the offending key.
fn key_of_message(msg: String) -> ConfigError {
    let key = msg.split([' ', ':']).next().unwrap_or("").to_string();
    ConfigError::Invalid { key, msg }
}

/// Planner defaults taken from the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerSettings {
    pub clearance: f64,
    pub step: f64,
    pub max_iterations: usize,
    pub goal_bias: f64,
    pub goal_tolerance: f64,
    pub allow_unknown: bool,
    pub shortcut: bool,
}

/// Typed view of a validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub sim: SimConfig,
    pub pipeline: PipelineConfig,
    pub planner: PlannerSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if !cfg.values.contains_key(key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        cfg.settings()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Overrides one key and revalidates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.apply(&[(key, value)])
    }

    /// Overrides several keys at once, validating only the final state.
    /// Nothing changes on error.
    pub fn apply(&mut self, overrides: &[(&str, &str)]) -> Result<(), ConfigError> {
        let mut next = self.clone();
        for (key, value) in overrides {
            if !next.values.contains_key(*key) {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                });
            }
            next.values.insert(key.to_string(), value.to_string());
        }
        next.settings()?;
        *self = next;
        Ok(())
    }

    /// Every key with its effective value, sorted; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of `to_text`, hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self
            .raw(key)
            .parse()
            .map_err(|_| invalid(key, format!("`{}` is not a number", self.raw(key))))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(key, "must be finite"))
        }
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.raw(key)
            .parse()
            .map_err(|_| invalid(key, format!("`{}` is not a non-negative integer", self.raw(key))))
    }

    fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.raw(key) {
            "true" | "1" | "on" => Ok(true),
            "false" | "0" | "off" => Ok(false),
            other => Err(invalid(key, format!("`{other}` is not a boolean"))),
        }
    }

    fn numbers(&self, key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(key, format!("`{s}` is not a number")))
            })
            .collect()
    }

    fn fixed<const N: usize>(&self, key: &str) -> Result<[f64; N], ConfigError> {
        let v = self.numbers(key, self.raw(key))?;
        v.try_into()
            .map_err(|v: Vec<f64>| invalid(key, format!("expected {N} numbers, got {}", v.len())))
    }

    /// `;`-separated groups of whitespace- or comma-separated numbers.
    fn groups(&self, key: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
        self.raw(key)
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(|g| self.numbers(key, g))
            .collect()
    }

    pub fn settings(&self) -> Result<Settings, ConfigError> {
        let seed: u64 = self
            .raw("seed")
            .parse()
            .map_err(|_| invalid("seed", "must be a non-negative integer"))?;

        let smoother = SmootherParams {
            s: self.f64("smoother.s")?,
            t_x: self.f64("smoother.t_x_seconds")?,
        };
        if smoother.s <= 0.0 {
            return Err(invalid("smoother.s", "must be > 0"));
        }
        if smoother.t_x <= 0.0 {
            return Err(invalid("smoother.t_x_seconds", "must be > 0"));
        }

        let mode_text = self.raw("gps.weighting.mode");
        let mode = WeightingMode::parse(mode_text).ok_or_else(|| {
            invalid(
                "gps.weighting.mode",
                format!("`{mode_text}` is not one of inverse_diagonal, isotropic_max, affine"),
            )
        })?;
        let huber_delta = match self.raw("gps.huber_delta") {
            "none" | "off" => None,
            _ => Some(self.f64("gps.huber_delta")?),
        };
        let mask = self.fixed::<3>("gps.axis_mask")?;
        if mask.iter().any(|m| *m != 0.0 && *m != 1.0) {
            return Err(invalid("gps.axis_mask", "entries must be 0 or 1"));
        }
        let gps_weighting = GpsWeighting {
            mode,
            a: self.f64("gps.weighting.a")?,
            b: self.f64("gps.weighting.b")?,
            huber_delta,
            axis_mask: mask.map(|m| m == 1.0),
        };
        gps_weighting.validate().map_err(key_of_message)?;

        let solver = SolverConfig {
            max_iterations: self.usize("solver.max_iterations")?,
            initial_lambda: self.f64("solver.initial_lambda")?,
            lambda_factor: self.f64("solver.lambda_factor")?,
            relative_tolerance: self.f64("solver.relative_tolerance")?,
            gauge_weight: self.f64("solver.gauge_weight")?,
            gps_weighting,
        };
        for (key, v) in [
            ("solver.initial_lambda", solver.initial_lambda),
            ("solver.gauge_weight", solver.gauge_weight),
            ("graph.orientation_prior_weight", self.f64("graph.orientation_prior_weight")?),
            ("graph.odom_translation_weight", self.f64("graph.odom_translation_weight")?),
            ("graph.odom_rotation_weight", self.f64("graph.odom_rotation_weight")?),
        ] {
            if v <= 0.0 {
                return Err(invalid(key, "must be > 0"));
            }
        }
        if solver.lambda_factor <= 1.0 {
            return Err(invalid("solver.lambda_factor", "must be > 1"));
        }
        if solver.relative_tolerance < 0.0 {
            return Err(invalid("solver.relative_tolerance", "must be >= 0"));
        }

        let submap = SubmapParams {
            high_res_edge: self.f64("map.high_res_edge")?,
            low_res_factor: u32::try_from(self.usize("map.low_res_factor")?)
                .map_err(|_| invalid("map.low_res_factor", "too large"))?,
            hit_probability: self.f64("map.submap_hit_probability")?,
            min_log_odds: self.f64("map.submap_min_log_odds")?,
            max_log_odds: self.f64("map.submap_max_log_odds")?,
            scans_per_submap: self.usize("map.scans_per_submap")?,
        };
        submap.validate().map_err(key_of_message)?;
        let octree = OctreeParams {
            resolution: self.f64("map.octree_resolution")?,
            hit_log_odds: self.f64("map.octree_hit_log_odds")?,
            miss_log_odds: self.f64("map.octree_miss_log_odds")?,
            min_log_odds: self.f64("map.octree_min_log_odds")?,
            max_log_odds: self.f64("map.octree_max_log_odds")?,
            occupied_threshold: self.f64("map.octree_occupied_threshold")?,
            free_threshold: self.f64("map.octree_free_threshold")?,
            carve_free_space: self.bool("map.carve_free_space")?,
        };
        octree.validate().map_err(key_of_message)?;
        let cloud_threshold = self.f64("map.cloud_threshold")?;
        if !(0.0..1.0).contains(&cloud_threshold) {
            return Err(invalid("map.cloud_threshold", "must be in [0, 1)"));
        }

        let planner = PlannerSettings {
            clearance: self.f64("planner.clearance")?,
            step: self.f64("planner.step")?,
            max_iterations: self.usize("planner.max_iterations")?,
            goal_bias: self.f64("planner.goal_bias")?,
            goal_tolerance: self.f64("planner.goal_tolerance")?,
            allow_unknown: self.bool("planner.allow_unknown")?,
            shortcut: self.bool("planner.shortcut")?,
        };
        if planner.clearance < 0.0 {
            return Err(invalid("planner.clearance", "must be >= 0"));
        }
        if planner.step <= 0.0 {
            return Err(invalid("planner.step", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&planner.goal_bias) {
            return Err(invalid("planner.goal_bias", "must be in [0, 1]"));
        }
        if planner.goal_tolerance < 0.0 {
            return Err(invalid("planner.goal_tolerance", "must be >= 0"));
        }

        let trajectory = match self.raw("sim.trajectory") {
            "circle" => TrajectorySpec::Circle {
                radius: self.f64("sim.circle.radius")?,
                height: self.f64("sim.circle.height")?,
                angular_rate: self.f64("sim.circle.angular_rate")?,
                laps: self.f64("sim.circle.laps")?,
            },
            "waypoints" => {
                let points = self
                    .groups("sim.waypoints")?
                    .into_iter()
                    .map(|g| match g.as_slice() {
                        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
                        _ => Err(invalid("sim.waypoints", "each waypoint needs 3 numbers")),
                    })
                    .collect::<Result<_, _>>()?;
                TrajectorySpec::Waypoints {
                    points,
                    speed: self.f64("sim.speed")?,
                }
            }
            other => return Err(invalid("sim.trajectory", format!("`{other}` is not circle or waypoints"))),
        };
        let gps_dropout = self
            .groups("sim.gps_dropout")?
            .into_iter()
            .map(|g| match g.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(invalid("sim.gps_dropout", "each window needs start and end")),
            })
            .collect::<Result<_, _>>()?;
        let environment = self
            .raw("sim.environment")
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(|g| {
                let rest = g
                    .strip_prefix("box")
                    .ok_or_else(|| invalid("sim.environment", format!("`{g}` must start with `box`")))?;
                match self.numbers("sim.environment", rest)?.as_slice() {
                    [a, b, c, d, e, f] => Ok(Obstacle {
                        min: Vector3::new(*a, *b, *c),
                        max: Vector3::new(*d, *e, *f),
                    }),
                    _ => Err(invalid("sim.environment", "a box needs 6 numbers")),
                }
            })
            .collect::<Result<_, _>>()?;
        let [lat, lon, alt] = self.fixed::<3>("sim.geo_origin")?;
        let geo_origin = GeoPoint::new(lat, lon, alt).map_err(|e| invalid("sim.geo_origin", e.to_string()))?;
        let [ox, oy, oz, oyaw] = self.fixed::<4>("sim.hidden_offset")?;
        let sim = SimConfig {
            trajectory,
            odom_rate: self.f64("sim.odom_rate")?,
            gps_rate: self.f64("sim.gps_rate")?,
            scan_rate: self.f64("sim.scan_rate")?,
            gps_sigma: Vector3::from(self.fixed::<3>("sim.gps_sigma")?),
            gps_noise: self.bool("sim.gps_noise")?,
            gps_altitude_drift: self.f64("sim.gps_altitude_drift")?,
            gps_dropout,
            odom_drift: self.f64("sim.odom_drift")?,
            odom_drift_yaw: self.f64("sim.odom_drift_yaw")?,
            odom_drift_direction: Vector3::from(self.fixed::<3>("sim.odom_drift_direction")?),
            odom_noise_translation: self.f64("sim.odom_noise_translation")?,
            odom_noise_rotation: self.f64("sim.odom_noise_rotation")?,
            heading_noise: self.f64("sim.heading_noise_deg")?.to_radians(),
            loop_radius: self.f64("sim.loop_radius")?,
            loop_min_gap: self.f64("sim.loop_min_gap")?,
            loop_every: self.usize("sim.loop_every")?,
            loop_noise_translation: self.f64("sim.loop_noise_translation")?,
            loop_noise_rotation: self.f64("sim.loop_noise_rotation_deg")?.to_radians(),
            loop_translation_weight: self.f64("graph.loop_translation_weight")?,
            loop_rotation_weight: self.f64("graph.loop_rotation_weight")?,
            optimization_period: self.f64("sim.optimization_period")?,
            environment,
            lidar_range: self.f64("sim.lidar_range")?,
            scan_spacing: self.f64("sim.scan_spacing")?,
            geo_origin,
            hidden_offset: Pose::new(Rotation::from_yaw(oyaw.to_radians()), Vector3::new(ox, oy, oz)),
            seed,
        };
        sim.validate().map_err(|e| invalid(e.key, e.msg))?;

        let pipeline = PipelineConfig {
            smoother,
            solver,
            gps_enabled: self.bool("gps.enabled")?,
            orientation_prior: self.bool("graph.orientation_prior")?,
            orientation_prior_weight: self.f64("graph.orientation_prior_weight")?,
            odom_translation_weight: self.f64("graph.odom_translation_weight")?,
            odom_rotation_weight: self.f64("graph.odom_rotation_weight")?,
            optimization_period: sim.optimization_period,
            delay_ticks: self.usize("solver.delay_ticks")?,
            final_optimization: self.bool("solver.final_optimization")?,
            submap,
            cloud_threshold,
            octree,
        };

        Ok(Settings {
            seed,
            sim,
            pipeline,
            planner,
        })
    }
}
