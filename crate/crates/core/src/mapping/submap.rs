use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use super::{logit, probability, MappingError, SubmapCloud};
use crate::geometry::Pose;

pub type VoxelIndex = [i32; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmapParams {
    /// High-resolution voxel edge, meters.
    pub high_res_edge: f64,
    /// Low-resolution edge as a multiple of the high-resolution edge.
    pub low_res_factor: u32,
    /// Probability one hit moves a fresh voxel to.
    pub hit_probability: f64,
    pub min_log_odds: f64,
    pub max_log_odds: f64,
    /// Scans per submap.
    pub scans_per_submap: usize,
}

impl Default for SubmapParams {
    fn default() -> Self {
        SubmapParams {
            high_res_edge: 0.1,
            low_res_factor: 4,
            hit_probability: 0.65,
            min_log_odds: -2.0,
            max_log_odds: 3.5,
            scans_per_submap: 40,
        }
    }
}

impl SubmapParams {
    pub fn low_res_edge(&self) -> f64 {
        self.high_res_edge * self.low_res_factor as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.high_res_edge.is_finite() && self.high_res_edge > 0.0) {
            return Err(format!("map.high_res_edge must be > 0, got {}", self.high_res_edge));
        }
        if self.low_res_factor == 0 {
            return Err("map.low_res_factor must be >= 1".into());
        }
        if !(self.hit_probability > 0.5 && self.hit_probability < 1.0) {
            return Err(format!(
                "map.submap_hit_probability must be in (0.5, 1), got {}",
                self.hit_probability
            ));
        }
        if !(self.min_log_odds < 0.0 && self.max_log_odds > 0.0) {
            return Err("map.submap_min_log_odds must be < 0 < map.submap_max_log_odds".into());
        }
        if self.scans_per_submap == 0 {
            return Err("map.scans_per_submap must be >= 1".into());
        }
        Ok(())
    }
}

/// Sparse voxel grid of occupancy probabilities anchored at the submap
/// origin; it grows to cover whatever is inserted. Absent voxels have
/// probability 0.5. Updates are applied in log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    edge: f64,
    cells: BTreeMap<VoxelIndex, f64>,
}

impl VoxelGrid {
    pub fn new(edge: f64) -> Self {
        VoxelGrid {
            edge,
            cells: BTreeMap::new(),
        }
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn index_of(&self, p: &Vector3<f64>) -> VoxelIndex {
        [
            (p.x / self.edge).floor() as i32,
            (p.y / self.edge).floor() as i32,
            (p.z / self.edge).floor() as i32,
        ]
    }

    pub fn center_of(&self, idx: &VoxelIndex) -> Vector3<f64> {
        Vector3::new(
            (idx[0] as f64 + 0.5) * self.edge,
            (idx[1] as f64 + 0.5) * self.edge,
            (idx[2] as f64 + 0.5) * self.edge,
        )
    }

    pub fn probability(&self, idx: &VoxelIndex) -> f64 {
        self.cells.get(idx).copied().unwrap_or(0.5)
    }

    pub fn set_probability(&mut self, idx: VoxelIndex, p: f64) {
        self.cells.insert(idx, p.clamp(0.0, 1.0));
    }

    pub fn add_log_odds(&mut self, idx: VoxelIndex, delta: f64, min: f64, max: f64) {
        let p = self.cells.entry(idx).or_insert(0.5);
        *p = probability((logit(*p) + delta).clamp(min, max));
    }

    /// Voxels and their probabilities, in index order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelIndex, f64)> {
        self.cells.iter().map(|(k, p)| (k, *p))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Dual-resolution occupancy grid built from a fixed number of scans.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmapGrid {
    pub id: usize,
    /// Submap frame expressed in the local frame.
    pub origin: Pose,
    pub high_res: VoxelGrid,
    pub low_res: VoxelGrid,
    pub scans_inserted: usize,
    pub params: SubmapParams,
    finished: bool,
}

impl SubmapGrid {
    pub fn new(id: usize, origin: Pose, params: SubmapParams) -> Self {
        SubmapGrid {
            id,
            origin,
            high_res: VoxelGrid::new(params.high_res_edge),
            low_res: VoxelGrid::new(params.low_res_edge()),
            scans_inserted: 0,
            params,
            finished: false,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Marks the submap complete regardless of its scan count.
    pub fn finish(&mut self) {
        self.finished = true;
    }

    /// Inserts one scan given in the submap frame. Each voxel receives at
    /// most one hit per scan, in both resolutions.
    pub fn insert_scan(&mut self, points: &[Vector3<f64>]) -> Result<(), MappingError> {
        if self.finished {
            return Err(MappingError::SubmapFinished(self.id));
        }
        let hit = logit(self.params.hit_probability);
        let (lo, hi) = (self.params.min_log_odds, self.params.max_log_odds);
        let high: BTreeSet<VoxelIndex> = points.iter().map(|p| self.high_res.index_of(p)).collect();
        let low: BTreeSet<VoxelIndex> = points.iter().map(|p| self.low_res.index_of(p)).collect();
        for idx in high {
            self.high_res.add_log_odds(idx, hit, lo, hi);
        }
        for idx in low {
            self.low_res.add_log_odds(idx, hit, lo, hi);
        }
        self.scans_inserted += 1;
        if self.scans_inserted >= self.params.scans_per_submap {
            self.finished = true;
        }
        Ok(())
    }

    /// One point per low-resolution voxel whose probability strictly exceeds
    /// `threshold`, at the voxel center mapped through `submap_global_pose`.
    pub fn extract_cloud(
        &self,
        submap_global_pose: &Pose,
        threshold: f64,
    ) -> Result<SubmapCloud, MappingError> {
        if !self.finished {
            return Err(MappingError::SubmapNotFinished(self.id));
        }
        let points = self
            .low_res
            .iter()
            .filter(|(_, p)| *p > threshold)
            .map(|(idx, _)| submap_global_pose.transform_point(&self.low_res.center_of(idx)))
            .collect();
        Ok(SubmapCloud {
            submap_id: self.id,
            points,
        })
    }
}
