//! Pose-graph SLAM backend pieces for feeding a UAV position controller.
//!
//! - [`geometry`]: rigid transforms, slerp and pose interpolation.
//! - [`smoothing`]: logistic blending of map-to-local corrections.
//! - [`graph`]: pose graph with GPS factors and a Levenberg-Marquardt solver.
//! - [`geodesy`]: WGS84 geodetic to local ENU.
//! - [`mapping`]: submap grids, submap clouds and the occupancy octree.
//! - [`planning`]: bidirectional RRT through octree free space.
//! - [`sim`]: synthetic flights and the full replay pipeline.
//! - [`config`]: flat `key = value` run configuration.


// Validators use `!(x > 0.0)` style on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod geodesy;
pub mod geometry;
pub mod graph;
pub mod mapping;
pub mod planning;

pub mod rng;
pub mod sim;

pub mod smoothing;

pub use geometry::{Pose, Rotation, Timestamp};
