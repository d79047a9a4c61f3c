//! Deterministic synthetic flights: ground truth, drifting odometry, GPS
//! fixes, loop-closure events and lattice-sampled scans.

mod io;
mod pipeline;

pub use io::{read_trace, write_trace, TraceError, MANIFEST_FILE as TRACE_MANIFEST_FILE};
pub use pipeline::{
    run_pipeline, Metrics, OptimizationRecord, PipelineConfig, RunArtifacts, TickSample,
};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geodesy::{EnuFrame, GeoPoint};
use crate::geometry::{Pose, Rotation};
use crate::graph::{ConstraintKind, RelativeConstraint};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {msg}")]
pub struct SimError {
    pub key: &'static str,
    pub msg: String,
}

fn invalid<T>(key: &'static str, msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError { key, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySpec {
    /// Counter-clockwise circle around the z axis at constant height,
    /// starting on the +x axis.
    Circle {
        radius: f64,
        height: f64,
        angular_rate: f64,
        laps: f64,
    },
    /// Straight segments flown at constant speed.
    Waypoints { points: Vec<Vector3<f64>>, speed: f64 },
}

impl TrajectorySpec {
    pub fn duration(&self) -> f64 {
        match self {
            TrajectorySpec::Circle { angular_rate, laps, .. } => laps * std::f64::consts::TAU / angular_rate,
            TrajectorySpec::Waypoints { points, speed } => {
                points.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>() / speed
            }
        }
    }

    /// Pose at time `t`, clamped to the flight span.
    pub fn pose_at(&self, t: f64) -> Pose {
        let t = t.clamp(0.0, self.duration());
        match self {
            TrajectorySpec::Circle {
                radius,
                height,
                angular_rate,
                ..
            } => {
                let a = angular_rate * t;
                Pose::new(
                    Rotation::from_yaw(a + std::f64::consts::FRAC_PI_2),
                    Vector3::new(radius * a.cos(), radius * a.sin(), *height),
                )
            }
            TrajectorySpec::Waypoints { points, speed } => {
                let mut remaining = t * speed;
                let mut yaw = 0.0;
                for w in points.windows(2) {
                    let d = w[1] - w[0];
                    let len = d.norm();
                    if d.xy().norm() > 1e-9 {
                        yaw = d.y.atan2(d.x);
                    }
                    if remaining <= len && len > 0.0 {
                        return Pose::new(Rotation::from_yaw(yaw), w[0] + d * (remaining / len));
                    }
                    remaining -= len;
                }
                Pose::new(Rotation::from_yaw(yaw), *points.last().expect("validated"))
            }
        }
    }
}

/// Axis-aligned box obstacle; thin boxes serve as walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trajectory: TrajectorySpec,
    pub odom_rate: f64,
    pub gps_rate: f64,
    pub scan_rate: f64,
    pub gps_sigma: Vector3<f64>,
    /// Add Gaussian noise with `gps_sigma` to the fixes.
    pub gps_noise: bool,
    /// Up-axis GPS error reached at the end of the flight, growing linearly.
    pub gps_altitude_drift: f64,
    /// Closed intervals without GPS.
    pub gps_dropout: Vec<(f64, f64)>,
    /// Translation bias, meters per meter traveled, along `odom_drift_direction`.
    pub odom_drift: f64,
    /// Yaw random-walk standard deviation per meter traveled, radians.
    pub odom_drift_yaw: f64,
    /// Direction of the translation bias in the odometry frame.
    pub odom_drift_direction: Vector3<f64>,
    /// Per-step, per-axis noise, meters.
    pub odom_noise_translation: f64,
    /// Per-step, per-axis noise, radians.
    pub odom_noise_rotation: f64,
    /// Standard deviation of the heading reported for the orientation prior.
    pub heading_noise: f64,
    pub loop_radius: f64,
    pub loop_min_gap: f64,
    /// Test for a loop closure every this many nodes (and at the last node).
    pub loop_every: usize,
    pub loop_noise_translation: f64,
    pub loop_noise_rotation: f64,
    pub loop_translation_weight: f64,
    pub loop_rotation_weight: f64,
    pub optimization_period: f64,
    pub environment: Vec<Obstacle>,
    pub lidar_range: f64,
    pub scan_spacing: f64,
    /// Geodetic origin of the ground-truth ENU frame.
    pub geo_origin: GeoPoint,
    /// Ground-truth frame relative to the frame odometry starts in.
    pub hidden_offset: Pose,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            trajectory: TrajectorySpec::Circle {
                radius: 10.0,
                height: 5.0,
                angular_rate: 0.1,
                laps: 1.0,
            },
            odom_rate: 10.0,
            gps_rate: 1.0,
            scan_rate: 2.0,
            gps_sigma: Vector3::new(0.05, 0.05, 0.1),
            gps_noise: true,
            gps_altitude_drift: 0.0,
            gps_dropout: Vec::new(),
            odom_drift: 0.01,
            odom_drift_yaw: 1e-4,
            odom_drift_direction: Vector3::z(),
            odom_noise_translation: 0.002,
            odom_noise_rotation: 2e-4,
            heading_noise: 1f64.to_radians(),
            loop_radius: 2.0,
            loop_min_gap: 20.0,
            loop_every: 10,
            loop_noise_translation: 0.02,
            loop_noise_rotation: 0.2f64.to_radians(),
            loop_translation_weight: 10.0,
            loop_rotation_weight: 50.0,
            optimization_period: 60.0,
            environment: vec![Obstacle {
                min: Vector3::new(-3.0, -3.0, 0.0),
                max: Vector3::new(3.0, 3.0, 8.0),
            }],
            lidar_range: 20.0,
            scan_spacing: 0.4,
            geo_origin: GeoPoint {
                latitude: 45.8,
                longitude: 15.97,
                altitude: 120.0,
            },
            hidden_offset: Pose::identity(),
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |key, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(key, format!("must be > 0, got {v}"))
            }
        };
        let non_negative = |key, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                invalid(key, format!("must be >= 0, got {v}"))
            }
        };
        match &self.trajectory {
            TrajectorySpec::Circle {
                radius,
                height,
                angular_rate,
                laps,
            } => {
                positive("sim.circle.radius", *radius)?;
                if !height.is_finite() {
                    return invalid("sim.circle.height", "must be finite");
                }
                positive("sim.circle.angular_rate", *angular_rate)?;
                positive("sim.circle.laps", *laps)?;
            }
            TrajectorySpec::Waypoints { points, speed } => {
                if points.len() < 2 {
                    return invalid("sim.waypoints", "need at least 2 waypoints");
                }
                if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
                    return invalid("sim.waypoints", "coordinates must be finite");
                }
                positive("sim.speed", *speed)?;
                if !(self.trajectory.duration() > 0.0) {
                    return invalid("sim.waypoints", "path has zero length");
                }
            }
        }
        positive("sim.odom_rate", self.odom_rate)?;
        positive("sim.gps_rate", self.gps_rate)?;
        positive("sim.scan_rate", self.scan_rate)?;
        if self.gps_rate > self.odom_rate {
            return invalid(
                "sim.gps_rate",
                format!("must not exceed sim.odom_rate ({} > {})", self.gps_rate, self.odom_rate),
            );
        }
        if self.scan_rate > self.odom_rate {
            return invalid("sim.scan_rate", "must not exceed sim.odom_rate");
        }
        for (i, s) in self.gps_sigma.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return invalid("sim.gps_sigma", format!("component {i} must be > 0, got {s}"));
            }
        }
        if !self.gps_altitude_drift.is_finite() {
            return invalid("sim.gps_altitude_drift", "must be finite");
        }
        for (a, b) in &self.gps_dropout {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return invalid("sim.gps_dropout", format!("bad window [{a}, {b}]"));
            }
        }
        non_negative("sim.odom_drift", self.odom_drift)?;
        non_negative("sim.odom_drift_yaw", self.odom_drift_yaw)?;
        if !(self.odom_drift_direction.norm() > 0.0) {
            return invalid("sim.odom_drift_direction", "must be nonzero");
        }
        non_negative("sim.odom_noise_translation", self.odom_noise_translation)?;
        non_negative("sim.odom_noise_rotation", self.odom_noise_rotation)?;
        non_negative("sim.heading_noise_deg", self.heading_noise)?;
        positive("sim.loop_radius", self.loop_radius)?;
        non_negative("sim.loop_min_gap", self.loop_min_gap)?;
        if self.loop_every == 0 {
            return invalid("sim.loop_every", "must be >= 1");
        }
        non_negative("sim.loop_noise_translation", self.loop_noise_translation)?;
        non_negative("sim.loop_noise_rotation_deg", self.loop_noise_rotation)?;
        positive("graph.loop_translation_weight", self.loop_translation_weight)?;
        positive("graph.loop_rotation_weight", self.loop_rotation_weight)?;
        positive("sim.optimization_period", self.optimization_period)?;
        for o in &self.environment {
            if !(0..3).all(|i| o.min[i] <= o.max[i]) {
                return invalid("sim.environment", "box min must not exceed max");
            }
        }
        positive("sim.lidar_range", self.lidar_range)?;
        positive("sim.scan_spacing", self.scan_spacing)?;
        if !self.hidden_offset.is_finite() {
            return invalid("sim.hidden_offset", "must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub time: f64,
    pub position: GeoPoint,
    /// East, north, up standard deviations, meters.
    pub sigma: Vector3<f64>,
}

/// Points of one scan, in the body frame at tick `tick`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub tick: usize,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    /// Body poses in the ground-truth ENU frame.
    pub ground_truth: Vec<Pose>,
    /// Body poses in the odometry frame.
    pub odometry: Vec<Pose>,
    pub gps: Vec<GpsFix>,
    /// Loop closures between tick indices, `from_id < to_id`.
    pub loop_events: Vec<RelativeConstraint>,
    pub scans: Vec<Scan>,
    /// Noisy absolute orientation of the first pose, as a compass would give.
    pub initial_heading: Rotation,
    pub geo_origin: GeoPoint,
}

fn normal3(rng: &mut StreamRng) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn in_dropout(t: f64, windows: &[(f64, f64)]) -> bool {
    windows.iter().any(|(a, b)| t >= *a && t <= *b)
}

/// Surface lattice of every obstacle within `range` of the pose, in the
/// body frame. Faces turned away from the sensor are skipped, so a box
/// hides its own far side; obstacles do not occlude each other.
pub fn synth_scan(environment: &[Obstacle], pose: &Pose, range: f64, spacing: f64) -> Vec<Vector3<f64>> {
    let inv = pose.inverse();
    let mut out = Vec::new();
    let steps = |len: f64| ((len / spacing).ceil() as usize).max(1);
    for o in environment {
        let ext = o.max - o.min;
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let (nu, nv) = (steps(ext[u]), steps(ext[v]));
            for (side, outward) in [(o.min[axis], -1.0), (o.max[axis], 1.0)] {
                let flat = ext[axis] == 0.0;
                let facing = flat || (pose.translation[axis] - side) * outward > 0.0;
                for i in (0..=nu).filter(|_| facing) {
                    for j in 0..=nv {
                        let mut p = Vector3::zeros();
                        p[axis] = side;
                        p[u] = o.min[u] + ext[u] * i as f64 / nu as f64;
                        p[v] = o.min[v] + ext[v] * j as f64 / nv as f64;
                        if (p - pose.translation).norm() <= range {
                            out.push(inv.transform_point(&p));
                        }
                    }
                }
                if flat {
                    break;
                }
            }
        }
    }
    out
}

pub fn generate(config: &SimConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    let traj = &config.trajectory;
    let duration = traj.duration();
    let n = (duration * config.odom_rate + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / config.odom_rate).collect();
    let nominal: Vec<Pose> = times.iter().map(|&t| traj.pose_at(t)).collect();
    let ground_truth: Vec<Pose> = nominal.iter().map(|p| config.hidden_offset.compose(p)).collect();

    let mut rng = substream(config.seed, "sim.odometry");
    let drift_dir = config.odom_drift_direction.normalize();
    let mut odometry = Vec::with_capacity(nominal.len());
    odometry.push(nominal[0]);
    for k in 1..nominal.len() {
        let inc = nominal[k - 1].inverse().compose(&nominal[k]);
        let d = inc.translation.norm();
        let dt = normal3(&mut rng) * config.odom_noise_translation;
        let dr = normal3(&mut rng) * config.odom_noise_rotation;
        let dyaw: f64 = rng.sample::<f64, _>(StandardNormal) * config.odom_drift_yaw * d;
        let noisy = Pose::new(
            inc.rotation.compose(&Rotation::exp(&(dr + Vector3::new(0.0, 0.0, dyaw)))),
            inc.translation + dt,
        );
        let mut next = odometry[k - 1].compose(&noisy);
        next.translation += drift_dir * (config.odom_drift * d);
        odometry.push(next);
    }

    let mut rng = substream(config.seed, "sim.heading");
    let yaw_err: f64 = rng.sample::<f64, _>(StandardNormal) * config.heading_noise;
    let initial_heading = Rotation::from_yaw(yaw_err).compose(&ground_truth[0].rotation);

    let mut rng = substream(config.seed, "sim.gps");
    let frame = EnuFrame::new(config.geo_origin);
    let t_end = times[n];
    let mut gps = Vec::new();
    for k in 0.. {
        let t = k as f64 / config.gps_rate;
        if t > t_end {
            break;
        }
        let noise = normal3(&mut rng);
        if in_dropout(t, &config.gps_dropout) {
            continue;
        }
        let mut p = config.hidden_offset.compose(&traj.pose_at(t)).translation;
        if config.gps_noise {
            p += noise.component_mul(&config.gps_sigma);
        }
        if t_end > 0.0 {
            p.z += config.gps_altitude_drift * t / t_end;
        }
        gps.push(GpsFix {
            time: t,
            position: frame.geodetic_of(&p),
            sigma: config.gps_sigma,
        });
    }

    let mut rng = substream(config.seed, "sim.loops");
    let mut loop_events = Vec::new();
    for k in 1..=n {
        if k % config.loop_every != 0 && k != n {
            continue;
        }
        let best = (0..k)
            .filter(|&j| times[k] - times[j] > config.loop_min_gap)
            .map(|j| (j, (ground_truth[k].translation - ground_truth[j].translation).norm()))
            .filter(|(_, d)| *d < config.loop_radius)
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 <= c.1 => Some(b),
                _ => Some(c),
            });
        if let Some((j, _)) = best {
            let truth = ground_truth[j].inverse().compose(&ground_truth[k]);
            let dt = normal3(&mut rng) * config.loop_noise_translation;
            let dr = normal3(&mut rng) * config.loop_noise_rotation;
            loop_events.push(RelativeConstraint {
                from_id: j,
                to_id: k,
                measured: Pose::new(truth.rotation.compose(&Rotation::exp(&dr)), truth.translation + dt),
                translation_weight: config.loop_translation_weight,
                rotation_weight: config.loop_rotation_weight,
                kind: ConstraintKind::LoopClosure,
            });
        }
    }

    let stride = ((config.odom_rate / config.scan_rate).round() as usize).max(1);
    let scans = (0..=n)
        .step_by(stride)
        .map(|tick| Scan {
            tick,
            points: synth_scan(&config.environment, &ground_truth[tick], config.lidar_range, config.scan_spacing),
        })
        .collect();

    Ok(SimTrace {
        times,
        ground_truth,
        odometry,
        gps,
        loop_events,
        scans,
        initial_heading,
        geo_origin: config.geo_origin,
    })
}
