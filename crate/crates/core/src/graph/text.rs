//! Line-oriented text dump of a pose graph.
//!
//! ```text
//! NODE id t px py pz qw qx qy qz
//! EDGE_REL from to px py pz qw qx qy qz tw rw kind
//! EDGE_GPS t ex en eu se sn su
//! PRIOR_ORIENT qw qx qy qz weight
//! ```
//!
//! `NODE` carries the global pose. A parsed graph uses it as the local pose
//! too, and GPS lines are re-bracketed against the parsed nodes.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use super::{ConstraintKind, GpsMeasurement, PoseGraph, RelativeConstraint};
use crate::geometry::{Pose, Rotation, Timestamp};

#[derive(Debug, Error)]
pub enum GraphTextError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn pose_fields(p: &Pose) -> String {
    format!(
        "{} {} {} {} {} {} {}",
        p.translation.x,
        p.translation.y,
        p.translation.z,
        p.rotation.w(),
        p.rotation.x(),
        p.rotation.y(),
        p.rotation.z()
    )
}

pub fn write_graph_text(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for n in &graph.nodes {
        let _ = writeln!(out, "NODE {} {} {}", n.id, n.time.0, pose_fields(&n.global_pose));
    }
    for c in &graph.relative_constraints {
        let _ = writeln!(
            out,
            "EDGE_REL {} {} {} {} {} {}",
            c.from_id,
            c.to_id,
            pose_fields(&c.measured),
            c.translation_weight,
            c.rotation_weight,
            c.kind.as_str()
        );
    }
    for c in &graph.gps_constraints {
        let m = &c.measurement;
        let _ = writeln!(
            out,
            "EDGE_GPS {} {} {} {} {} {} {}",
            m.time.0,
            m.position_enu.x,
            m.position_enu.y,
            m.position_enu.z,
            m.sigma_enu.x,
            m.sigma_enu.y,
            m.sigma_enu.z
        );
    }
    if let Some(p) = &graph.initial_orientation_prior {
        let _ = writeln!(
            out,
            "PRIOR_ORIENT {} {} {} {} {}",
            p.rotation.w(),
            p.rotation.x(),
            p.rotation.y(),
            p.rotation.z(),
            p.weight
        );
    }
    out
}

pub fn parse_graph_text(text: &str) -> Result<PoseGraph, GraphTextError> {
    let mut graph = PoseGraph::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| GraphTextError::Parse { line, msg };
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.split_whitespace();
        let tag = parts.next().unwrap_or_default();
        let fields: Vec<&str> = parts.collect();
        let num = |k: usize| -> Result<f64, GraphTextError> {
            fields
                .get(k)
                .ok_or_else(|| err(format!("missing field {k}")))?
                .parse::<f64>()
                .map_err(|e| err(format!("field {k}: {e}")))
        };
        let idx = |k: usize| -> Result<usize, GraphTextError> {
            fields
                .get(k)
                .ok_or_else(|| err(format!("missing field {k}")))?
                .parse::<usize>()
                .map_err(|e| err(format!("field {k}: {e}")))
        };
        let pose_at = |k: usize| -> Result<Pose, GraphTextError> {
            Ok(Pose::new(
                Rotation::from_wxyz(num(k + 3)?, num(k + 4)?, num(k + 5)?, num(k + 6)?),
                Vector3::new(num(k)?, num(k + 1)?, num(k + 2)?),
            ))
        };
        match tag {
            "NODE" => {
                if fields.len() != 9 {
                    return Err(err(format!("NODE needs 9 fields, got {}", fields.len())));
                }
                let id = idx(0)?;
                if id != graph.nodes.len() {
                    return Err(err(format!("node id {id} out of sequence")));
                }
                let p = pose_at(2)?;
                graph
                    .add_node(Timestamp(num(1)?), p, p)
                    .map_err(|e| err(e.to_string()))?;
            }
            "EDGE_REL" => {
                if fields.len() != 12 {
                    return Err(err(format!("EDGE_REL needs 12 fields, got {}", fields.len())));
                }
                let kind = ConstraintKind::parse(fields[11])
                    .ok_or_else(|| err(format!("unknown constraint kind {}", fields[11])))?;
                graph
                    .add_relative_constraint(RelativeConstraint {
                        from_id: idx(0)?,
                        to_id: idx(1)?,
                        measured: pose_at(2)?,
                        translation_weight: num(9)?,
                        rotation_weight: num(10)?,
                        kind,
                    })
                    .map_err(|e| err(e.to_string()))?;
            }
            "EDGE_GPS" => {
                if fields.len() != 7 {
                    return Err(err(format!("EDGE_GPS needs 7 fields, got {}", fields.len())));
                }
                graph
                    .attach_gps(GpsMeasurement {
                        time: Timestamp(num(0)?),
                        position_enu: Vector3::new(num(1)?, num(2)?, num(3)?),
                        sigma_enu: Vector3::new(num(4)?, num(5)?, num(6)?),
                    })
                    .map_err(|e| err(e.to_string()))?;
            }
            "PRIOR_ORIENT" => {
                if fields.len() != 5 {
                    return Err(err(format!("PRIOR_ORIENT needs 5 fields, got {}", fields.len())));
                }
                graph
                    .set_initial_orientation(
                        Rotation::from_wxyz(num(0)?, num(1)?, num(2)?, num(3)?),
                        num(4)?,
                    )
                    .map_err(|e| err(e.to_string()))?;
            }
            other => return Err(err(format!("unknown record {other}"))),
        }
    }
    Ok(graph)
}
