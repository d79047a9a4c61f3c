//! Bidirectional goal-biased RRT through the free space of an occupancy octree, plus
//! random and greedy path shortcutting.

use nalgebra::Vector3;
use rand::Rng;
use thiserror::Error;

use crate::mapping::{Occupancy, OccupancyOctree};
use crate::rng::substream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid plan request: {0}")]
    InvalidRequest(String),
    #[error("start not free")]
    StartNotFree,
    #[error("goal not free")]
    GoalNotFree,
    #[error("no path found after {0} iterations")]
    Exhausted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
    pub clearance: f64,
    pub max_iterations: usize,
    pub step: f64,
    pub goal_tolerance: f64,
    pub goal_bias: f64,
    /// Treat unknown space as traversable.
    pub allow_unknown: bool,
    pub seed: u64,
}

impl PlanRequest {
    /// Request with default tuning inside `[bounds_min, bounds_max]`.
    pub fn new(start: Vector3<f64>, goal: Vector3<f64>, bounds_min: Vector3<f64>, bounds_max: Vector3<f64>) -> Self {
        PlanRequest {
            start,
            goal,
            bounds_min,
            bounds_max,
            clearance: 0.2,
            max_iterations: 10_000,
            step: 0.5,
            goal_tolerance: 0.5,
            goal_bias: 0.1,
            allow_unknown: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let inside = |p: &Vector3<f64>| (0..3).all(|i| p[i] >= self.bounds_min[i] && p[i] <= self.bounds_max[i]);
        let bad = |m: &str| Err(PlanError::InvalidRequest(m.to_string()));
        if !(0..3).all(|i| self.bounds_min[i] < self.bounds_max[i]) {
            return bad("bounds min must be below max on every axis");
        }
        if !inside(&self.start) {
            return bad("start outside bounds");
        }
        if !inside(&self.goal) {
            return bad("goal outside bounds");
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return bad("clearance must be >= 0");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be > 0");
        }
        if !(self.goal_tolerance >= 0.0) {
            return bad("goal tolerance must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal bias must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub waypoints: Vec<Vector3<f64>>,
}

impl Path {
    pub const CSV_HEADER: &'static str = "x,y,z";

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.waypoints.iter().map(|p| format!("{},{},{}", p.x, p.y, p.z))
    }
}

fn sample_spacing(octree: &OccupancyOctree) -> f64 {
    octree.resolution() / 4.0
}

fn box_distance(p: &Vector3<f64>, center: &Vector3<f64>, half: f64) -> f64 {
    let d = (p - center).abs().add_scalar(-half).sup(&Vector3::zeros());
    d.norm()
}

/// Sample test used by segment validation. Occupied leaves are inflated by
/// half the sample spacing on top of `clearance`, so a segment whose
/// samples all pass keeps at least `clearance` everywhere in between.
fn point_ok(octree: &OccupancyOctree, p: &Vector3<f64>, clearance: f64, allow_unknown: bool) -> bool {
    if !allow_unknown && octree.query(p) == Occupancy::Unknown {
        return false;
    }
    let reach = clearance + sample_spacing(octree) / 2.0;
    let lo = p.add_scalar(-reach);
    let hi = p.add_scalar(reach);
    octree
        .occupied_boxes_in(&lo, &hi)
        .iter()
        .all(|(c, half)| box_distance(p, c, *half) > reach)
}

/// True when every sample along `[a, b]`, spaced at a quarter of the leaf
/// edge, is clear of occupied leaves by `clearance` and, unless
/// `allow_unknown`, lies in known space.
pub fn validate_segment(
    octree: &OccupancyOctree,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    clearance: f64,
    allow_unknown: bool,
) -> bool {
    let len = (b - a).norm();
    let n = (len / sample_spacing(octree)).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let u = i as f64 / n as f64;
        point_ok(octree, &(a + (b - a) * u), clearance, allow_unknown)
    })
}

/// Parent-linked tree of collision-free points.
struct Tree {
    nodes: Vec<(Vector3<f64>, usize)>,
}

impl Tree {
    fn nearest(&self, p: &Vector3<f64>) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, (q, _))| (i, (q - p).norm_squared()))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
            .0
    }

    /// Root-to-node points.
    fn branch(&self, mut i: usize) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        loop {
            out.push(self.nodes[i].0);
            if i == 0 {
                break;
            }
            i = self.nodes[i].1;
        }
        out.reverse();
        out
    }
}

/// Bidirectional goal-biased RRT (RRT-Connect): the start and goal trees
/// take turns stepping toward a sample until blocked or there, and after
/// each extension the other tree steps toward the new point the same way. The path starts at
/// `start` and ends exactly at `goal`.
pub fn plan_rrt(octree: &OccupancyOctree, req: &PlanRequest) -> Result<Path, PlanError> {
    req.validate()?;
    let ok = |a: &Vector3<f64>, b: &Vector3<f64>| validate_segment(octree, a, b, req.clearance, req.allow_unknown);
    if !ok(&req.start, &req.start) {
        return Err(PlanError::StartNotFree);
    }
    if !ok(&req.goal, &req.goal) {
        return Err(PlanError::GoalNotFree);
    }
    if ok(&req.start, &req.goal) {
        return Ok(Path {
            waypoints: dedup(vec![req.start, req.goal]),
        });
    }

    let step_toward = |from: &Vector3<f64>, to: &Vector3<f64>| {
        let d = (to - from).norm();
        if d <= req.step {
            *to
        } else {
            from + (to - from) * (req.step / d)
        }
    };
    let join = |trees: &[Tree; 2], a: usize, b: usize| {
        let mut w = trees[0].branch(a);
        let mut back = trees[1].branch(b);
        back.reverse();
        w.extend(back);
        Path { waypoints: dedup(w) }
    };

    let mut rng = substream(req.seed, "planner");
    let mut trees = [
        Tree { nodes: vec![(req.start, 0)] },
        Tree { nodes: vec![(req.goal, 0)] },
    ];
    let roots = [req.start, req.goal];
    for iter in 0..req.max_iterations {
        let (grow, other) = if iter % 2 == 0 { (0, 1) } else { (1, 0) };
        let target = if rng.gen::<f64>() < req.goal_bias {
            roots[other]
        } else {
            Vector3::from_fn(|i, _| rng.gen_range(req.bounds_min[i]..=req.bounds_max[i]))
        };
        let near = trees[grow].nearest(&target);
        let from = trees[grow].nodes[near].0;
        if from == target {
            continue;
        }
        let mut new_id = near;
        let mut new = from;
        while new != target {
            let q = step_toward(&new, &target);
            if !ok(&new, &q) {
                break;
            }
            trees[grow].nodes.push((q, new_id));
            new_id = trees[grow].nodes.len() - 1;
            new = q;
        }
        if new_id == near {
            continue;
        }

        // Start-tree nodes close enough to the goal finish directly.
        if grow == 0 && (req.goal - new).norm() <= req.goal_tolerance && ok(&new, &req.goal) {
            return Ok(join(&trees, new_id, 0));
        }

        // Connect: the other tree steps toward `new` until blocked or there.
        let mut at = trees[other].nearest(&new);
        loop {
            let p = trees[other].nodes[at].0;
            let q = step_toward(&p, &new);
            if !ok(&p, &q) {
                break;
            }
            trees[other].nodes.push((q, at));
            at = trees[other].nodes.len() - 1;
            if q == new {
                let (a, b) = if grow == 0 { (new_id, at) } else { (at, new_id) };
                return Ok(join(&trees, a, b));
            }
        }
    }
    Err(PlanError::Exhausted(req.max_iterations))
}

fn dedup(mut w: Vec<Vector3<f64>>) -> Vec<Vector3<f64>> {
    w.dedup();
    w
}

/// Shortens a valid path: seeded random chord attempts, then a greedy pass
/// that jumps to the furthest directly reachable waypoint.
pub fn shortcut(path: &Path, octree: &OccupancyOctree, clearance: f64, allow_unknown: bool, seed: u64) -> Path {
    let ok = |a: &Vector3<f64>, b: &Vector3<f64>| validate_segment(octree, a, b, clearance, allow_unknown);
    let mut pts = path.waypoints.clone();
    let mut rng = substream(seed, "planner.shortcut");
    let attempts = 4 * pts.len();
    for _ in 0..attempts {
        if pts.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..pts.len() - 2);
        let j = rng.gen_range(i + 2..pts.len());
        if ok(&pts[i], &pts[j]) {
            pts.drain(i + 1..j);
        }
    }
    if pts.len() >= 3 {
        let mut out = vec![pts[0]];
        let mut i = 0;
        while i < pts.len() - 1 {
            let mut j = pts.len() - 1;
            while j > i + 1 && !ok(&pts[i], &pts[j]) {
                j -= 1;
            }
            out.push(pts[j]);
            i = j;
        }
        pts = out;
    }
    Path { waypoints: pts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::OctreeParams;

    fn free_box(res: f64, size: f64) -> OccupancyOctree {
        let mut t = OccupancyOctree::new(OctreeParams {
            resolution: res,
            ..Default::default()
        });
        t.update_box(&Vector3::zeros(), &Vector3::repeat(size), false);
        t
    }

    #[test]
    fn empty_map_segments_are_valid() {
        let t = OccupancyOctree::new(OctreeParams::default());
        assert!(validate_segment(&t, &Vector3::zeros(), &Vector3::new(3.0, -2.0, 7.0), 0.5, true));
        assert!(!validate_segment(&t, &Vector3::zeros(), &Vector3::new(3.0, -2.0, 7.0), 0.5, false));
    }

    #[test]
    fn segment_through_occupied_center() {
        let mut t = free_box(0.2, 4.0);
        t.update_box(&Vector3::new(2.0, 2.0, 2.0), &Vector3::new(2.2, 2.2, 2.2), true);
        let c = Vector3::new(2.1, 2.1, 2.1);
        assert!(!validate_segment(&t, &(c - Vector3::x()), &(c + Vector3::x()), 0.0, false));
    }

    #[test]
    fn clearance_threshold() {
        // Occupied leaf [2.0, 2.2]^3; the segment runs 0.15 m above its top face.
        let mut t = free_box(0.2, 4.0);
        t.update_box(&Vector3::new(2.05, 2.05, 2.05), &Vector3::new(2.15, 2.15, 2.15), true);
        let a = Vector3::new(1.0, 2.1, 2.35);
        let b = Vector3::new(3.0, 2.1, 2.35);
        assert!(!validate_segment(&t, &a, &b, 0.2, false));
        assert!(validate_segment(&t, &a, &b, 0.1, false));
    }

    #[test]
    fn free_box_path_and_length_bound() {
        let t = free_box(0.5, 10.0);
        let mut req = PlanRequest::new(
            Vector3::repeat(1.0),
            Vector3::repeat(9.0),
            Vector3::zeros(),
            Vector3::repeat(10.0),
        );
        req.seed = 3;
        let p = plan_rrt(&t, &req).unwrap();
        assert_eq!(p.waypoints[0], req.start);
        assert_eq!(*p.waypoints.last().unwrap(), req.goal);
        assert!(p.length() >= 13.856);
    }

    #[test]
    fn goal_inside_block_is_rejected() {
        let mut t = free_box(0.5, 10.0);
        t.update_box(&Vector3::repeat(6.0), &Vector3::repeat(8.0), true);
        t.update_box(&Vector3::repeat(6.0), &Vector3::repeat(8.0), true);
        let req = PlanRequest::new(Vector3::repeat(1.0), Vector3::repeat(7.0), Vector3::zeros(), Vector3::repeat(10.0));
        let err = plan_rrt(&t, &req).unwrap_err();
        assert_eq!(err, PlanError::GoalNotFree);
        assert_eq!(err.to_string(), "goal not free");
    }

    #[test]
    fn zigzag_straightens() {
        let t = free_box(0.5, 10.0);
        let zig = Path {
            waypoints: (0..9)
                .map(|i| Vector3::new(1.0 + i as f64, if i % 2 == 0 { 2.0 } else { 4.0 }, 5.0))
                .collect(),
        };
        let s = shortcut(&zig, &t, 0.2, false, 1);
        assert_eq!(s.waypoints.len(), 2);
        assert!((s.length() - 8.0).abs() < 1e-12);
        let again = shortcut(&s, &t, 0.2, false, 1);
        assert!((again.length() - s.length()).abs() < 1e-9);
    }

    #[test]
    fn two_point_path_unchanged() {
        let t = free_box(0.5, 10.0);
        let p = Path {
            waypoints: vec![Vector3::repeat(1.0), Vector3::repeat(2.0)],
        };
        assert_eq!(shortcut(&p, &t, 0.2, false, 9), p);
    }
}
