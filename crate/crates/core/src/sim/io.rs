//! Trace bundles: one CSV per series plus a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use super::{GpsFix, Scan, SimTrace};
use crate::geodesy::GeoPoint;
use crate::geometry::{parse_pose_csv_row, pose_csv_row, Pose, Rotation, Timestamp, POSE_CSV_HEADER};
use crate::graph::{ConstraintKind, RelativeConstraint};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const GPS_FILE: &str = "gps.csv";
pub const LOOPS_FILE: &str = "loops.csv";
pub const SCANS_FILE: &str = "scans.csv";
pub const REFERENCE_FILE: &str = "reference.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub const GPS_HEADER: &str = "t,lat,lon,alt,se,sn,su";
const LOOPS_HEADER: &str = "from,to,px,py,pz,qw,qx,qy,qz,tw,rw";
const SCANS_HEADER: &str = "tick,x,y,z";
const REFERENCE_HEADER: &str = "lat,lon,alt,qw,qx,qy,qz";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn pose_series(times: &[f64], poses: &[Pose]) -> String {
    let mut s = format!("{POSE_CSV_HEADER}\n");
    for (t, p) in times.iter().zip(poses) {
        s.push_str(&pose_csv_row(Timestamp(*t), p));
        s.push('\n');
    }
    s
}

pub fn gps_csv(fixes: &[GpsFix]) -> String {
    let mut s = format!("{GPS_HEADER}\n");
    for g in fixes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            g.time, g.position.latitude, g.position.longitude, g.position.altitude, g.sigma.x, g.sigma.y, g.sigma.z
        );
    }
    s
}

/// Writes every series of `trace` and `manifest` into `dir`, creating it.
pub fn write_trace(dir: &Path, trace: &SimTrace, manifest: &str) -> Result<(), TraceError> {
    let io = |file: &str| {
        let file = file.to_string();
        move |source| TraceError::Io { file, source }
    };
    fs::create_dir_all(dir).map_err(io(&dir.display().to_string()))?;

    let mut loops = format!("{LOOPS_HEADER}\n");
    for c in &trace.loop_events {
        let p = &c.measured;
        let _ = writeln!(
            loops,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.from_id,
            c.to_id,
            p.translation.x,
            p.translation.y,
            p.translation.z,
            p.rotation.w(),
            p.rotation.x(),
            p.rotation.y(),
            p.rotation.z(),
            c.translation_weight,
            c.rotation_weight
        );
    }
    let mut scans = format!("{SCANS_HEADER}\n");
    for s in &trace.scans {
        for p in &s.points {
            let _ = writeln!(scans, "{},{},{},{}", s.tick, p.x, p.y, p.z);
        }
    }
    let (o, q) = (&trace.geo_origin, &trace.initial_heading);
    let reference = format!(
        "{REFERENCE_HEADER}\n{},{},{},{},{},{},{}\n",
        o.latitude,
        o.longitude,
        o.altitude,
        q.w(),
        q.x(),
        q.y(),
        q.z()
    );

    for (name, body) in [
        (GROUND_TRUTH_FILE, pose_series(&trace.times, &trace.ground_truth)),
        (ODOMETRY_FILE, pose_series(&trace.times, &trace.odometry)),
        (GPS_FILE, gps_csv(&trace.gps)),
        (LOOPS_FILE, loops),
        (SCANS_FILE, scans),
        (REFERENCE_FILE, reference),
        (MANIFEST_FILE, manifest.to_string()),
    ] {
        fs::write(dir.join(name), body).map_err(io(name))?;
    }
    Ok(())
}

fn read_rows(dir: &Path, file: &str, header: &str) -> Result<Vec<(usize, Vec<f64>)>, TraceError> {
    let text = fs::read_to_string(dir.join(file)).map_err(|source| TraceError::Io {
        file: file.to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(parse_err(file, 1, format!("expected header {header}"))),
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(file, i + 1, e.to_string()))?;
        if v.len() != width {
            return Err(parse_err(file, i + 1, format!("expected {width} columns, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(file, i + 1, "non-finite value"));
        }
        out.push((i + 1, v));
    }
    Ok(out)
}

fn read_poses(dir: &Path, file: &str) -> Result<(Vec<f64>, Vec<Pose>), TraceError> {
    let text = fs::read_to_string(dir.join(file)).map_err(|source| TraceError::Io {
        file: file.to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(POSE_CSV_HEADER) {
        return Err(parse_err(file, 1, format!("expected header {POSE_CSV_HEADER}")));
    }
    let mut times = Vec::new();
    let mut poses = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (t, p) = parse_pose_csv_row(line).ok_or_else(|| parse_err(file, i + 1, "bad pose row"))?;
        if !p.is_finite() || !t.0.is_finite() {
            return Err(parse_err(file, i + 1, "non-finite value"));
        }
        if let Some(&last) = times.last() {
            if t.0 <= last {
                return Err(parse_err(file, i + 1, "times must increase"));
            }
        }
        times.push(t.0);
        poses.push(p);
    }
    Ok((times, poses))
}

fn index(file: &str, line: usize, v: f64, len: usize) -> Result<usize, TraceError> {
    if v >= 0.0 && v.fract() == 0.0 && (v as usize) < len {
        Ok(v as usize)
    } else {
        Err(parse_err(file, line, format!("index {v} out of range")))
    }
}

pub fn read_trace(dir: &Path) -> Result<SimTrace, TraceError> {
    let (times, ground_truth) = read_poses(dir, GROUND_TRUTH_FILE)?;
    let (odom_times, odometry) = read_poses(dir, ODOMETRY_FILE)?;
    if odom_times != times {
        return Err(parse_err(ODOMETRY_FILE, 1, "timestamps differ from ground truth"));
    }
    if times.is_empty() {
        return Err(parse_err(ODOMETRY_FILE, 1, "empty trajectory"));
    }
    let n = times.len();

    let mut gps = Vec::new();
    for (line, v) in read_rows(dir, GPS_FILE, GPS_HEADER)? {
        let position =
            GeoPoint::new(v[1], v[2], v[3]).map_err(|e| parse_err(GPS_FILE, line, e.to_string()))?;
        let sigma = Vector3::new(v[4], v[5], v[6]);
        if sigma.iter().any(|s| *s <= 0.0) {
            return Err(parse_err(GPS_FILE, line, "sigmas must be > 0"));
        }
        gps.push(GpsFix {
            time: v[0],
            position,
            sigma,
        });
    }

    let mut loop_events = Vec::new();
    for (line, v) in read_rows(dir, LOOPS_FILE, LOOPS_HEADER)? {
        loop_events.push(RelativeConstraint {
            from_id: index(LOOPS_FILE, line, v[0], n)?,
            to_id: index(LOOPS_FILE, line, v[1], n)?,
            measured: Pose::new(Rotation::from_wxyz(v[5], v[6], v[7], v[8]), Vector3::new(v[2], v[3], v[4])),
            translation_weight: v[9],
            rotation_weight: v[10],
            kind: ConstraintKind::LoopClosure,
        });
    }

    let mut scans: Vec<Scan> = Vec::new();
    for (line, v) in read_rows(dir, SCANS_FILE, SCANS_HEADER)? {
        let tick = index(SCANS_FILE, line, v[0], n)?;
        let p = Vector3::new(v[1], v[2], v[3]);
        match scans.last_mut() {
            Some(s) if s.tick == tick => s.points.push(p),
            Some(s) if s.tick > tick => return Err(parse_err(SCANS_FILE, line, "ticks must not decrease")),
            _ => scans.push(Scan { tick, points: vec![p] }),
        }
    }

    let reference = read_rows(dir, REFERENCE_FILE, REFERENCE_HEADER)?;
    let [(line, v)] = reference.as_slice() else {
        return Err(parse_err(REFERENCE_FILE, 2, "expected exactly one row"));
    };
    let geo_origin = GeoPoint::new(v[0], v[1], v[2]).map_err(|e| parse_err(REFERENCE_FILE, *line, e.to_string()))?;
    let initial_heading = Rotation::from_wxyz(v[3], v[4], v[5], v[6]);

    Ok(SimTrace {
        times,
        ground_truth,
        odometry,
        gps,
        loop_events,
        scans,
        initial_heading,
        geo_origin,
    })
}
