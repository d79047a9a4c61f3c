use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use arc_swap::ArcSwap;
use nalgebra::Vector3;
use thiserror::Error;

use super::SubmapCloud;

/// Depth of the tree; leaves live at this depth.
pub const TREE_DEPTH: u8 = 16;
const KEY_OFFSET: i64 = 1 << (TREE_DEPTH - 1);
pub const OCTREE_MAGIC: &[u8; 4] = b"AOK1";
pub const OCTREE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;
const LEAF_LEN: usize = 2 * 3 + 1 + 8;

pub type OctreeKey = [u16; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy {
    Free,
    Occupied,
    Unknown,
}

impl Occupancy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Occupancy::Free => "free",
            Occupancy::Occupied => "occupied",
            Occupancy::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctreeParams {
    /// Leaf edge, meters.
    pub resolution: f64,
    pub hit_log_odds: f64,
    pub miss_log_odds: f64,
    pub min_log_odds: f64,
    pub max_log_odds: f64,
    /// Leaves strictly above this are occupied.
    pub occupied_threshold: f64,
    /// Leaves strictly below this are free.
    pub free_threshold: f64,
    /// Apply misses along the ray from the sensor origin to each point.
    pub carve_free_space: bool,
}

impl Default for OctreeParams {
    fn default() -> Self {
        OctreeParams {
            resolution: 0.2,
            hit_log_odds: 0.85,
            miss_log_odds: -0.4,
            min_log_odds: -2.0,
            max_log_odds: 3.5,
            occupied_threshold: 0.0,
            free_threshold: 0.0,
            carve_free_space: true,
        }
    }
}

impl OctreeParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(format!("map.octree_resolution must be > 0, got {}", self.resolution));
        }
        if !(self.hit_log_odds > 0.0) {
            return Err("map.octree_hit_log_odds must be > 0".into());
        }
        if !(self.miss_log_odds < 0.0) {
            return Err("map.octree_miss_log_odds must be < 0".into());
        }
        if !(self.min_log_odds < self.free_threshold
            && self.free_threshold <= self.occupied_threshold
            && self.occupied_threshold < self.max_log_odds)
        {
            return Err("map.octree_occupied_threshold: octree thresholds must satisfy min < free <= occupied < max".into());
        }
        Ok(())
    }

    fn classify(&self, log_odds: f64) -> Occupancy {
        if log_odds > self.occupied_threshold {
            Occupancy::Occupied
        } else if log_odds < self.free_threshold {
            Occupancy::Free
        } else {
            Occupancy::Unknown
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    log_odds: f64,
    children: Option<Box<[Option<Node>; 8]>>,
}

impl Node {
    fn leaf(log_odds: f64) -> Self {
        Node {
            log_odds,
            children: None,
        }
    }
}

fn child_index(key: &OctreeKey, depth: u8) -> usize {
    let shift = TREE_DEPTH - 1 - depth;
    (((key[0] >> shift) & 1) | (((key[1] >> shift) & 1) << 1) | (((key[2] >> shift) & 1) << 2)) as usize
}

#[derive(Debug, Error)]
pub enum OctreeFormatError {
    #[error("bad magic, expected AOK1")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("truncated file: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("invalid leaf {index}: {msg}")]
    Leaf { index: u64, msg: String },
    #[error("invalid resolution {0}")]
    Resolution(f64),
}

/// Hierarchical occupancy map with log-odds leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyOctree {
    params: OctreeParams,
    root: Option<Node>,
}

impl OccupancyOctree {
    pub fn new(params: OctreeParams) -> Self {
        OccupancyOctree { params, root: None }
    }

    pub fn params(&self) -> &OctreeParams {
        &self.params
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    pub fn key_of(&self, p: &Vector3<f64>) -> Option<OctreeKey> {
        let mut key = [0u16; 3];
        for (k, v) in key.iter_mut().zip(p.iter()) {
            let cell = (v / self.params.resolution).floor();
            if !cell.is_finite() {
                return None;
            }
            let shifted = cell as i64 + KEY_OFFSET;
            if !(0..(1i64 << TREE_DEPTH)).contains(&shifted) {
                return None;
            }
            *k = shifted as u16;
        }
        Some(key)
    }

    /// Center of the leaf with `key`.
    pub fn key_center(&self, key: &OctreeKey) -> Vector3<f64> {
        self.node_center(key, TREE_DEPTH)
    }

    fn node_center(&self, min_key: &OctreeKey, depth: u8) -> Vector3<f64> {
        let half = (1u32 << (TREE_DEPTH - depth)) as f64 / 2.0;
        let c = |k: u16| ((k as i64 - KEY_OFFSET) as f64 + half) * self.params.resolution;
        Vector3::new(c(min_key[0]), c(min_key[1]), c(min_key[2]))
    }

    fn node_size(&self, depth: u8) -> f64 {
        (1u32 << (TREE_DEPTH - depth)) as f64 * self.params.resolution
    }

    /// Adds `delta` to the leaf at `key`, expanding pruned ancestors.
    pub fn update_key(&mut self, key: &OctreeKey, delta: f64) {
        let (lo, hi) = (self.params.min_log_odds, self.params.max_log_odds);
        let mut node = self.root.get_or_insert_with(|| Node {
            log_odds: 0.0,
            children: Some(Box::default()),
        });
        for depth in 0..TREE_DEPTH {
            if node.children.is_none() {
                // Pruned leaf covering this key: split into 8 copies.
                let v = node.log_odds;
                node.children = Some(Box::new(std::array::from_fn(|_| Some(Node::leaf(v)))));
            }
            let children = node.children.as_mut().expect("children exist");
            let slot = &mut children[child_index(key, depth)];
            node = slot.get_or_insert_with(|| {
                if depth + 1 == TREE_DEPTH {
                    Node::leaf(0.0)
                } else {
                    Node {
                        log_odds: 0.0,
                        children: Some(Box::default()),
                    }
                }
            });
        }
        node.log_odds = (node.log_odds + delta).clamp(lo, hi);
    }

    /// Log-odds of the leaf covering `key`, if any.
    pub fn log_odds_at_key(&self, key: &OctreeKey) -> Option<f64> {
        let mut node = self.root.as_ref()?;
        let mut depth = 0;
        loop {
            match &node.children {
                None => return Some(node.log_odds),
                Some(children) => {
                    if depth == TREE_DEPTH {
                        return Some(node.log_odds);
                    }
                    node = children[child_index(key, depth)].as_ref()?;
                    depth += 1;
                }
            }
        }
    }

    pub fn query(&self, point: &Vector3<f64>) -> Occupancy {
        self.key_of(point)
            .map(|k| self.query_key(&k))
            .unwrap_or(Occupancy::Unknown)
    }

    pub fn query_key(&self, key: &OctreeKey) -> Occupancy {
        match self.log_odds_at_key(key) {
            Some(l) => self.params.classify(l),
            None => Occupancy::Unknown,
        }
    }

    /// Integrates a submap cloud: one hit per occupied leaf and, with
    /// carving enabled, one miss per leaf crossed by a ray from
    /// `sensor_origin` that is not itself hit by this cloud.
    pub fn insert_cloud(&mut self, cloud: &SubmapCloud, sensor_origin: &Vector3<f64>) {
        let occupied: BTreeSet<OctreeKey> = cloud.points.iter().filter_map(|p| self.key_of(p)).collect();
        if self.params.carve_free_space {
            let mut free = BTreeSet::new();
            for p in &cloud.points {
                self.ray_keys(sensor_origin, p, &mut free);
            }
            for k in free.difference(&occupied) {
                self.update_key(k, self.params.miss_log_odds);
            }
        }
        for k in &occupied {
            self.update_key(k, self.params.hit_log_odds);
        }
    }

    /// Keys of the leaves a segment passes through before the leaf holding
    /// `end` (3D DDA over the leaf lattice).
    pub fn ray_keys(&self, start: &Vector3<f64>, end: &Vector3<f64>, out: &mut BTreeSet<OctreeKey>) {
        let (Some(k0), Some(k1)) = (self.key_of(start), self.key_of(end)) else {
            return;
        };
        if k0 == k1 {
            return;
        }
        let res = self.params.resolution;
        let dir = end - start;
        let len = dir.norm();
        let dir = dir / len;
        let mut key = [k0[0] as i64, k0[1] as i64, k0[2] as i64];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if dir[i] > 0.0 {
                step[i] = 1;
            } else if dir[i] < 0.0 {
                step[i] = -1;
            }
            if step[i] != 0 {
                let border = (key[i] - KEY_OFFSET) as f64 * res + if step[i] > 0 { res } else { 0.0 };
                t_max[i] = (border - start[i]) / dir[i];
                t_delta[i] = res / dir[i].abs();
            }
        }
        let target = [k1[0] as i64, k1[1] as i64, k1[2] as i64];
        out.insert(k0);
        loop {
            let axis = if t_max[0] < t_max[1] {
                if t_max[0] < t_max[2] { 0 } else { 2 }
            } else if t_max[1] < t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > len {
                break;
            }
            key[axis] += step[axis];
            t_max[axis] += t_delta[axis];
            if key == target || !(0..(1i64 << TREE_DEPTH)).contains(&key[axis]) {
                break;
            }
            out.insert([key[0] as u16, key[1] as u16, key[2] as u16]);
        }
    }

    /// Applies a hit (`occupied = true`) or miss to every leaf whose center
    /// lies in the box. Used to build fixtures and mark known free space.
    pub fn update_box(&mut self, min: &Vector3<f64>, max: &Vector3<f64>, occupied: bool) {
        let (Some(a), Some(b)) = (self.key_of(min), self.key_of(max)) else {
            return;
        };
        let delta = if occupied {
            self.params.hit_log_odds
        } else {
            self.params.miss_log_odds
        };
        for x in a[0]..=b[0] {
            for y in a[1]..=b[1] {
                for z in a[2]..=b[2] {
                    let k = [x, y, z];
                    let c = self.key_center(&k);
                    if (0..3).all(|i| c[i] >= min[i] && c[i] <= max[i]) {
                        self.update_key(&k, delta);
                    }
                }
            }
        }
    }

    /// Collapses every inner node whose 8 children are leaves with identical
    /// log-odds. Query results are unchanged.
    pub fn prune(&mut self) {
        fn prune_node(node: &mut Node) {
            let Some(children) = node.children.as_mut() else {
                return;
            };
            for c in children.iter_mut().flatten() {
                prune_node(c);
            }
            let first = match &children[0] {
                Some(c) if c.children.is_none() => c.log_odds,
                _ => return,
            };
            let uniform = children.iter().all(|c| {
                matches!(c, Some(n) if n.children.is_none() && n.log_odds.to_bits() == first.to_bits())
            });
            if uniform {
                node.children = None;
                node.log_odds = first;
            }
        }
        if let Some(root) = self.root.as_mut() {
            prune_node(root);
        }
    }

    /// Visits every leaf (possibly pruned) as `(min key, depth, log-odds)`
    /// in depth-first child order.
    pub fn for_each_leaf(&self, mut f: impl FnMut(OctreeKey, u8, f64)) {
        fn walk(node: &Node, key: OctreeKey, depth: u8, f: &mut impl FnMut(OctreeKey, u8, f64)) {
            match &node.children {
                None => f(key, depth, node.log_odds),
                Some(children) => {
                    let shift = TREE_DEPTH - 1 - depth;
                    for (i, c) in children.iter().enumerate() {
                        if let Some(c) = c {
                            let mut k = key;
                            for (axis, kk) in k.iter_mut().enumerate() {
                                *kk |= (((i >> axis) & 1) as u16) << shift;
                            }
                            walk(c, k, depth + 1, f);
                        }
                    }
                }
            }
        }
        if let Some(root) = &self.root {
            walk(root, [0, 0, 0], 0, &mut f);
        }
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.for_each_leaf(|_, _, _| n += 1);
        n
    }

    /// Leaf-resolution keys of all occupied space, expanding pruned nodes.
    pub fn occupied_keys(&self) -> BTreeSet<OctreeKey> {
        let mut out = BTreeSet::new();
        self.for_each_leaf(|k, depth, l| {
            if self.params.classify(l) == Occupancy::Occupied {
                let n = 1u32 << (TREE_DEPTH - depth);
                for dx in 0..n {
                    for dy in 0..n {
                        for dz in 0..n {
                            out.insert([k[0] + dx as u16, k[1] + dy as u16, k[2] + dz as u16]);
                        }
                    }
                }
            }
        });
        out
    }

    /// Occupied leaf boxes `(center, half edge)` overlapping the query box.
    pub fn occupied_boxes_in(&self, min: &Vector3<f64>, max: &Vector3<f64>) -> Vec<(Vector3<f64>, f64)> {
        let mut out = Vec::new();
        let Some(root) = &self.root else {
            return out;
        };
        let mut stack = vec![(root, [0u16; 3], 0u8)];
        while let Some((node, key, depth)) = stack.pop() {
            let half = self.node_size(depth) / 2.0;
            let c = self.node_center(&key, depth);
            if (0..3).any(|i| c[i] + half < min[i] || c[i] - half > max[i]) {
                continue;
            }
            match &node.children {
                None => {
                    if self.params.classify(node.log_odds) == Occupancy::Occupied {
                        out.push((c, half));
                    }
                }
                Some(children) => {
                    let shift = TREE_DEPTH - 1 - depth;
                    for (i, ch) in children.iter().enumerate() {
                        if let Some(ch) = ch {
                            let mut k = key;
                            for (axis, kk) in k.iter_mut().enumerate() {
                                *kk |= (((i >> axis) & 1) as u16) << shift;
                            }
                            stack.push((ch, k, depth + 1));
                        }
                    }
                }
            }
        }
        out
    }

    /// Axis-aligned bounds of all leaves, if any.
    pub fn known_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut bounds: Option<(Vector3<f64>, Vector3<f64>)> = None;
        self.for_each_leaf(|k, depth, _| {
            let half = self.node_size(depth) / 2.0;
            let c = self.node_center(&k, depth);
            let (lo, hi) = (c.add_scalar(-half), c.add_scalar(half));
            bounds = Some(match bounds {
                None => (lo, hi),
                Some((a, b)) => (a.inf(&lo), b.sup(&hi)),
            });
        });
        bounds
    }

    /// `OCC x y z state logodds` per leaf, at the leaf center.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.for_each_leaf(|k, depth, l| {
            let c = self.node_center(&k, depth);
            let _ = writeln!(out, "OCC {} {} {} {} {}", c.x, c.y, c.z, self.params.classify(l).as_str(), l);
        });
        out
    }

    /// Binary export in the `AOK1` layout described in the README.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut leaves = Vec::new();
        self.for_each_leaf(|k, d, l| leaves.push((k, d, l)));
        let mut out = Vec::with_capacity(HEADER_LEN + leaves.len() * LEAF_LEN);
        out.extend_from_slice(OCTREE_MAGIC);
        out.extend_from_slice(&OCTREE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.params.resolution.to_le_bytes());
        out.extend_from_slice(&(leaves.len() as u64).to_le_bytes());
        for (k, d, l) in leaves {
            for v in k {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(d);
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    /// Reads the binary export. Parameters other than the resolution come
    /// from `params`.
    pub fn from_bytes(bytes: &[u8], params: OctreeParams) -> Result<Self, OctreeFormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(OctreeFormatError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[0..4] != OCTREE_MAGIC {
            return Err(OctreeFormatError::Magic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != OCTREE_VERSION {
            return Err(OctreeFormatError::Version(version));
        }
        let resolution = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(OctreeFormatError::Resolution(resolution));
        }
        let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let expected = (count as usize)
            .checked_mul(LEAF_LEN)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or(OctreeFormatError::Truncated {
                expected: usize::MAX,
                got: bytes.len(),
            })?;
        if bytes.len() != expected {
            return Err(OctreeFormatError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let mut tree = OccupancyOctree::new(OctreeParams { resolution, ..params });
        for i in 0..count {
            let o = HEADER_LEN + i as usize * LEAF_LEN;
            let u = |j: usize| u16::from_le_bytes([bytes[o + 2 * j], bytes[o + 2 * j + 1]]);
            let key = [u(0), u(1), u(2)];
            let depth = bytes[o + 6];
            let l = f64::from_le_bytes(bytes[o + 7..o + 15].try_into().expect("8 bytes"));
            if depth > TREE_DEPTH || !l.is_finite() {
                return Err(OctreeFormatError::Leaf {
                    index: i,
                    msg: format!("depth {depth} log-odds {l}"),
                });
            }
            let span = 1u32 << (TREE_DEPTH - depth);
            if key.iter().any(|&k| !(k as u32).is_multiple_of(span)) {
                return Err(OctreeFormatError::Leaf {
                    index: i,
                    msg: "key not aligned to its depth".into(),
                });
            }
            tree.set_node(&key, depth, l);
        }
        Ok(tree)
    }

    fn set_node(&mut self, key: &OctreeKey, depth: u8, log_odds: f64) {
        let mut node = self.root.get_or_insert_with(|| Node {
            log_odds: 0.0,
            children: Some(Box::default()),
        });
        for d in 0..depth {
            let children = node.children.get_or_insert_with(Box::default);
            node = children[child_index(key, d)].get_or_insert_with(|| Node {
                log_odds: 0.0,
                children: Some(Box::default()),
            });
        }
        node.children = None;
        node.log_odds = log_odds;
    }
}

/// Single-writer publisher of immutable octree snapshots. Readers never see
/// a partially inserted cloud.
#[derive(Debug)]
pub struct OctreePublisher {
    current: ArcSwap<OccupancyOctree>,
}

impl OctreePublisher {
    pub fn new(tree: OccupancyOctree) -> Self {
        OctreePublisher {
            current: ArcSwap::from_pointee(tree),
        }
    }

    pub fn snapshot(&self) -> Arc<OccupancyOctree> {
        self.current.load_full()
    }

    pub fn publish(&self, tree: OccupancyOctree) {
        self.current.store(Arc::new(tree));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_carve() -> OctreeParams {
        OctreeParams {
            carve_free_space: false,
            ..Default::default()
        }
    }

    fn cloud(points: Vec<Vector3<f64>>) -> SubmapCloud {
        SubmapCloud { submap_id: 0, points }
    }

    #[test]
    fn untouched_is_unknown() {
        let t = OccupancyOctree::new(OctreeParams::default());
        assert_eq!(t.query(&Vector3::new(1.0, 2.0, 3.0)), Occupancy::Unknown);
    }

    #[test]
    fn one_hit_occupies_one_leaf() {
        let mut t = OccupancyOctree::new(no_carve());
        let p = Vector3::new(1.05, -0.3, 2.0);
        t.insert_cloud(&cloud(vec![p]), &Vector3::zeros());
        assert_eq!(t.query(&p), Occupancy::Occupied);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.occupied_keys().len(), 1);
    }

    #[test]
    fn repeated_insertion_clamps() {
        let mut t = OccupancyOctree::new(OctreeParams::default());
        let c = cloud(vec![Vector3::new(1.0, 0.1, 0.1), Vector3::new(0.1, 1.3, 0.1)]);
        t.insert_cloud(&c, &Vector3::new(0.1, 0.1, 0.1));
        let first = t.occupied_keys();
        for _ in 0..10 {
            t.insert_cloud(&c, &Vector3::new(0.1, 0.1, 0.1));
        }
        assert_eq!(t.occupied_keys(), first);
        let k = t.key_of(&c.points[0]).unwrap();
        assert_eq!(t.log_odds_at_key(&k), Some(3.5));
    }

    #[test]
    fn ray_through_five_voxels() {
        // Integer ray-walk oracle: along +x from leaf 0 to leaf 4 the DDA
        // visits leaves 0..=3 before the endpoint.
        let mut t = OccupancyOctree::new(OctreeParams::default());
        let origin = Vector3::new(0.1, 0.1, 0.1);
        let hit = Vector3::new(0.9, 0.1, 0.1);
        t.insert_cloud(&cloud(vec![hit]), &origin);
        let mut free = 0;
        let mut occ = 0;
        t.for_each_leaf(|_, _, l| {
            if l < 0.0 {
                free += 1
            } else if l > 0.0 {
                occ += 1
            }
        });
        assert_eq!((free, occ), (4, 1));
        assert_eq!(t.query(&Vector3::new(0.5, 0.1, 0.1)), Occupancy::Free);
        assert_eq!(t.query(&hit), Occupancy::Occupied);
    }

    #[test]
    fn diagonal_ray_is_connected() {
        let t = OccupancyOctree::new(OctreeParams::default());
        let mut keys = BTreeSet::new();
        t.ray_keys(&Vector3::new(0.05, 0.07, 0.01), &Vector3::new(3.1, -2.3, 1.7), &mut keys);
        let end = t.key_of(&Vector3::new(3.1, -2.3, 1.7)).unwrap();
        assert!(!keys.contains(&end));
        // Every visited leaf must be face-adjacent to another visited leaf
        // or to the endpoint.
        let all: BTreeSet<_> = keys.iter().copied().chain([end]).collect();
        for k in &keys {
            let adjacent = all.iter().any(|o| {
                let d: i32 = (0..3).map(|i| (k[i] as i32 - o[i] as i32).abs()).sum();
                d == 1
            });
            assert!(adjacent);
        }
    }

    #[test]
    fn prune_solid_block() {
        let mut t = OccupancyOctree::new(no_carve());
        let pts: Vec<_> = (0..2)
            .flat_map(|x| (0..2).flat_map(move |y| (0..2).map(move |z| Vector3::new(x as f64 * 0.2 + 0.1, y as f64 * 0.2 + 0.1, z as f64 * 0.2 + 0.1))))
            .collect();
        t.insert_cloud(&cloud(pts.clone()), &Vector3::zeros());
        assert_eq!(t.leaf_count(), 8);
        t.prune();
        assert_eq!(t.leaf_count(), 1);
        for p in &pts {
            assert_eq!(t.query(p), Occupancy::Occupied);
        }
        // Updating inside a pruned node splits it again.
        t.update_key(&t.key_of(&pts[0]).unwrap(), -10.0);
        assert_eq!(t.query(&pts[0]), Occupancy::Free);
        assert_eq!(t.query(&pts[1]), Occupancy::Occupied);
    }

    #[test]
    fn prune_keeps_mixed_children() {
        let mut t = OccupancyOctree::new(no_carve());
        t.insert_cloud(&cloud(vec![Vector3::new(0.1, 0.1, 0.1)]), &Vector3::zeros());
        t.insert_cloud(&cloud(vec![Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.3, 0.1, 0.1)]), &Vector3::zeros());
        let before = t.clone();
        t.prune();
        assert_eq!(t, before);
    }

    #[test]
    fn prune_preserves_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = OccupancyOctree::new(OctreeParams::default());
        t.update_box(&Vector3::new(0.0, 0.0, 0.0), &Vector3::new(3.2, 3.2, 1.6), false);
        t.update_box(&Vector3::new(1.6, 0.0, 0.0), &Vector3::new(1.8, 3.2, 1.6), true);
        let before = t.clone();
        t.prune();
        assert!(t.leaf_count() < before.leaf_count());
        for _ in 0..1000 {
            let p = Vector3::new(rng.gen_range(-0.5..4.0), rng.gen_range(-0.5..4.0), rng.gen_range(-0.5..2.0));
            assert_eq!(t.query(&p), before.query(&p));
        }
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let mut t = OccupancyOctree::new(OctreeParams::default());
        t.insert_cloud(&cloud(vec![Vector3::new(2.0, 1.0, 0.5), Vector3::new(-1.0, 0.2, 0.3)]), &Vector3::zeros());
        t.prune();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[0..4], b"AOK1");
        assert_eq!(bytes.len(), HEADER_LEN + t.leaf_count() * LEAF_LEN);
        let back = OccupancyOctree::from_bytes(&bytes, OctreeParams::default()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.to_text(), t.to_text());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(OccupancyOctree::from_bytes(&bad, OctreeParams::default()), Err(OctreeFormatError::Magic)));
        assert!(matches!(
            OccupancyOctree::from_bytes(&bytes[..bytes.len() - 1], OctreeParams::default()),
            Err(OctreeFormatError::Truncated { .. })
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(OccupancyOctree::from_bytes(&v2, OctreeParams::default()), Err(OctreeFormatError::Version(2))));
    }

    #[test]
    fn occupied_box_query() {
        let mut t = OccupancyOctree::new(no_carve());
        t.insert_cloud(&cloud(vec![Vector3::new(1.1, 1.1, 1.1)]), &Vector3::zeros());
        assert_eq!(t.occupied_boxes_in(&Vector3::repeat(0.0), &Vector3::repeat(0.5)).len(), 0);
        let hits = t.occupied_boxes_in(&Vector3::repeat(1.15), &Vector3::repeat(2.0));
        assert_eq!(hits.len(), 1);
        assert!((hits[0].0 - Vector3::repeat(1.1)).norm() < 1e-12);
        assert!((hits[0].1 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn publisher_swaps_snapshots() {
        let publisher = OctreePublisher::new(OccupancyOctree::new(no_carve()));
        let old = publisher.snapshot();
        let mut next = (*old).clone();
        next.insert_cloud(&cloud(vec![Vector3::new(0.1, 0.1, 0.1)]), &Vector3::zeros());
        publisher.publish(next);
        assert_eq!(old.leaf_count(), 0);
        assert_eq!(publisher.snapshot().leaf_count(), 1);
    }
}
