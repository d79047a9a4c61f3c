//! Submap occupancy grids, submap clouds and the occupancy octree built
//! from them.
//!
//! A finished submap contributes one point per sufficiently occupied
//! low-resolution voxel; those clouds are what the octree is built from,
//! rather than raw scans.

mod octree;
mod submap;

pub use octree::{
    Occupancy, OccupancyOctree, OctreeKey, OctreeParams, OctreePublisher, OctreeFormatError,
    OCTREE_MAGIC, OCTREE_VERSION, TREE_DEPTH,
};
pub use submap::{SubmapGrid, SubmapParams, VoxelGrid, VoxelIndex};

use nalgebra::Vector3;
use thiserror::Error;

/// Default occupancy probability a low-resolution voxel must exceed to
/// enter a submap cloud.
pub const CLOUD_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("submap {0} is finished and accepts no more scans")]
    SubmapFinished(usize),
    #[error("submap {0} is not finished")]
    SubmapNotFinished(usize),
}

/// Occupied low-resolution voxel centers of one finished submap, in the
/// global frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubmapCloud {
    pub submap_id: usize,
    pub points: Vec<Vector3<f64>>,
}

impl SubmapCloud {
    pub const CSV_HEADER: &'static str = "submap,x,y,z";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.points
            .iter()
            .map(move |p| format!("{},{},{},{}", self.submap_id, p.x, p.y, p.z))
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn probability(log_odds: f64) -> f64 {
    1.0 / (1.0 + (-log_odds).exp())
}

pub fn insert_scan(submap: &mut SubmapGrid, points: &[Vector3<f64>]) -> Result<(), MappingError> {
    submap.insert_scan(points)
}

pub fn extract_cloud(
    submap: &SubmapGrid,
    submap_global_pose: &crate::geometry::Pose,
    threshold: f64,
) -> Result<SubmapCloud, MappingError> {
    submap.extract_cloud(submap_global_pose, threshold)
}
