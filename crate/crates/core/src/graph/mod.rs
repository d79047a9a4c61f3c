//! The pose graph: trajectory nodes, relative and GPS constraints, the
//! absolute initial-orientation prior, and the Levenberg-Marquardt backend.

mod residual;
mod solver;
mod sparse;
mod text;

pub use residual::{
    gps_residual, gps_residual_jacobian, gps_weighted_cost, huber_loss,
    orientation_prior_residual, position_prior_residual, relative_residual,
    relative_residual_jacobian, GpsWeighting, WeightingMode,
};
pub use solver::{optimize, BackgroundOptimizer, OptimizationReport, OptimizationResult, SolverConfig};
pub use text::{parse_graph_text, write_graph_text, GraphTextError};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{Pose, Rotation, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node time {time} is not after the previous node time {previous}")]
    NonIncreasingTime { time: f64, previous: f64 },
    #[error("constraint references missing node {0}")]
    MissingNode(usize),
    #[error("constraint connects node {0} to itself")]
    SelfLoop(usize),
    #[error("constraint weights must be positive, got translation {0} rotation {1}")]
    BadWeight(f64, f64),
    #[error("GPS sigmas must be positive, got {0:?}")]
    BadSigma([f64; 3]),
    #[error("operation needs at least one node")]
    Empty,
    #[error("pose graph is not connected: node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("normal equations are singular; the graph gauge is under-constrained")]
    UnderConstrained,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryNode {
    pub id: usize,
    pub time: Timestamp,
    /// Odometric pose from local SLAM; never optimized.
    pub local_pose: Pose,
    /// Optimization variable in the map frame.
    pub global_pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Odometry,
    LoopClosure,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::Odometry => "odometry",
            ConstraintKind::LoopClosure => "loop_closure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "odometry" => Some(ConstraintKind::Odometry),
            "loop_closure" => Some(ConstraintKind::LoopClosure),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeConstraint {
    pub from_id: usize,
    pub to_id: usize,
    /// Measured transform from `from_id` to `to_id`.
    pub measured: Pose,
    /// 1/m
    pub translation_weight: f64,
    /// 1/rad
    pub rotation_weight: f64,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsMeasurement {
    pub time: Timestamp,
    pub position_enu: Vector3<f64>,
    /// Standard deviations (east, north, up) in meters.
    pub sigma_enu: Vector3<f64>,
}

impl GpsMeasurement {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.sigma_enu.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(GraphError::BadSigma([
                self.sigma_enu.x,
                self.sigma_enu.y,
                self.sigma_enu.z,
            ]));
        }
        if !self.position_enu.iter().all(|v| v.is_finite()) || !self.time.0.is_finite() {
            return Err(GraphError::NonFinite("GPS measurement"));
        }
        Ok(())
    }
}

/// A GPS measurement tied to the two trajectory nodes around its timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsConstraint {
    pub measurement: GpsMeasurement,
    pub node_before: usize,
    pub node_after: usize,
    /// `(t_gps - t_n) / (t_{n+1} - t_n)`.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GpsAttachment {
    Attached(GpsConstraint),
    /// The measurement lies outside the trajectory's time span.
    Skipped,
}

/// Absolute orientation of node 0 relative to the map frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationPrior {
    pub rotation: Rotation,
    /// 1/rad
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    pub nodes: Vec<TrajectoryNode>,
    pub relative_constraints: Vec<RelativeConstraint>,
    pub gps_constraints: Vec<GpsConstraint>,
    pub initial_orientation_prior: Option<OrientationPrior>,
    /// Pose that node 0 is held at when no GPS constraint fixes the gauge.
    pub gauge_anchor: Option<Pose>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last_node(&self) -> Option<&TrajectoryNode> {
        self.nodes.last()
    }

    /// Appends a node. Ids are assigned sequentially, so a node's id is its
    /// index in `nodes`.
    pub fn add_node(
        &mut self,
        time: Timestamp,
        local_pose: Pose,
        global_pose: Pose,
    ) -> Result<usize, GraphError> {
        if !time.0.is_finite() {
            return Err(GraphError::NonFinite("node time"));
        }
        if !local_pose.is_finite() || !global_pose.is_finite() {
            return Err(GraphError::NonFinite("node pose"));
        }
        if let Some(last) = self.nodes.last() {
            if time.0 <= last.time.0 {
                return Err(GraphError::NonIncreasingTime {
                    time: time.0,
                    previous: last.time.0,
                });
            }
        }
        let id = self.nodes.len();
        if id == 0 && self.gauge_anchor.is_none() {
            self.gauge_anchor = Some(global_pose);
        }
        self.nodes.push(TrajectoryNode {
            id,
            time,
            local_pose,
            global_pose,
        });
        Ok(id)
    }

    pub fn add_relative_constraint(&mut self, c: RelativeConstraint) -> Result<(), GraphError> {
        for id in [c.from_id, c.to_id] {
            if id >= self.nodes.len() {
                return Err(GraphError::MissingNode(id));
            }
        }
        if c.from_id == c.to_id {
            return Err(GraphError::SelfLoop(c.from_id));
        }
        if !(c.translation_weight > 0.0 && c.rotation_weight > 0.0)
            || !c.translation_weight.is_finite()
            || !c.rotation_weight.is_finite()
        {
            return Err(GraphError::BadWeight(c.translation_weight, c.rotation_weight));
        }
        if !c.measured.is_finite() {
            return Err(GraphError::NonFinite("relative constraint"));
        }
        self.relative_constraints.push(c);
        Ok(())
    }

    /// Finds the node pair bracketing `m.time`. A measurement exactly at a
    /// node time pairs with that node and its successor (`beta = 0`), except
    /// at the final node, which pairs with its predecessor (`beta = 1`).
    pub fn bracket_gps(&self, m: &GpsMeasurement) -> GpsAttachment {
        let t = m.time.0;
        let n = self.nodes.len();
        if n < 2 || t < self.nodes[0].time.0 || t > self.nodes[n - 1].time.0 {
            return GpsAttachment::Skipped;
        }
        let after = self.nodes.partition_point(|node| node.time.0 <= t);
        let (before, after) = if after == n {
            (n - 2, n - 1)
        } else {
            (after - 1, after)
        };
        let t0 = self.nodes[before].time.0;
        let t1 = self.nodes[after].time.0;
        let beta = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        GpsAttachment::Attached(GpsConstraint {
            measurement: *m,
            node_before: before,
            node_after: after,
            beta,
        })
    }

    pub fn attach_gps(&mut self, m: GpsMeasurement) -> Result<GpsAttachment, GraphError> {
        m.validate()?;
        let a = self.bracket_gps(&m);
        if let GpsAttachment::Attached(c) = a {
            self.gps_constraints.push(c);
        }
        Ok(a)
    }

    /// Adds an absolute orientation prior on node 0. This plays the role of
    /// a constraint against a virtual trajectory sitting at the map origin.
    pub fn set_initial_orientation(&mut self, q0: Rotation, weight: f64) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(GraphError::BadWeight(weight, weight));
        }
        self.initial_orientation_prior = Some(OrientationPrior {
            rotation: q0,
            weight,
        });
        if self.gauge_anchor.is_none() {
            self.gauge_anchor = Some(self.nodes[0].global_pose);
        }
        Ok(())
    }

    /// Residual of the orientation prior at node 0's current estimate.
    pub fn orientation_prior_residual(&self) -> Option<Vector3<f64>> {
        let prior = self.initial_orientation_prior?;
        let node = self.nodes.first()?;
        Some(orientation_prior_residual(&node.global_pose, &prior.rotation, prior.weight).0)
    }

    /// Map-to-local correction implied by the last node:
    /// `global * inverse(local)`.
    pub fn correction(&self) -> Pose {
        self.nodes
            .last()
            .map(|n| n.global_pose.compose(&n.local_pose.inverse()))
            .unwrap_or_default()
    }

    /// Writes optimized poses back for the first `poses.len()` nodes (the
    /// snapshot that was optimized). Nodes appended since the snapshot are
    /// re-expressed through `correction`.
    pub fn merge_optimized(&mut self, poses: &[Pose], correction: &Pose) {
        for (node, pose) in self.nodes.iter_mut().zip(poses) {
            node.global_pose = *pose;
        }
        for node in self.nodes.iter_mut().skip(poses.len()) {
            node.global_pose = correction.compose(&node.local_pose);
        }
    }

    /// Union-find connectivity over relative constraints.
    pub fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in &self.relative_constraints {
            let a = find(&mut parent, c.from_id);
            let b = find(&mut parent, c.to_id);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        for i in 1..n {
            if find(&mut parent, i) != find(&mut parent, 0) {
                return Err(GraphError::Disconnected(i));
            }
        }
        Ok(())
    }
}
