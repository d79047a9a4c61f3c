//! Levenberg-Marquardt over node poses.

use std::thread::JoinHandle;

use nalgebra::{SMatrix, SVector, Vector3, Vector6};

use super::residual::{
    gps_residual_jacobian, huber_loss, orientation_prior_residual, position_prior_residual,
    relative_residual_jacobian, GpsWeighting,
};
use super::sparse::{reverse_cuthill_mckee, SkylineMatrix, BLOCK};
use super::{GraphError, PoseGraph};
use crate::geometry::{Pose, Rotation};

const SINGULAR_PIVOT_TOL: f64 = 1e-10;
const MAX_LAMBDA: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Multiplier on rejection, divisor on acceptance.
    pub lambda_factor: f64,
    /// Converged once an accepted step lowers the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Weight of the node-0 gauge prior (1/m and 1/rad).
    pub gauge_weight: f64,
    pub gps_weighting: GpsWeighting,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            initial_lambda: 1e-4,
            lambda_factor: 10.0,
            relative_tolerance: 1e-9,
            gauge_weight: 1e3,
            gps_weighting: GpsWeighting::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    /// Step attempts, accepted or rejected.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Optimized global pose per node of the input graph.
    pub poses: Vec<Pose>,
    /// New map-to-local correction from the last node.
    pub correction: Pose,
    pub report: OptimizationReport,
}

enum Factor {
    Relative(usize),
    Gps(usize),
    Orientation { node: usize, target: Rotation, weight: f64 },
    Position { node: usize, target: Vector3<f64>, weight: f64 },
}

struct Problem<'a> {
    graph: &'a PoseGraph,
    factors: Vec<Factor>,
    gps: GpsWeighting,
    /// Block position of each node after reordering.
    perm: Vec<usize>,
    block_first: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(graph: &'a PoseGraph, config: &SolverConfig) -> Self {
        let n = graph.nodes.len();
        let mut factors: Vec<Factor> = (0..graph.relative_constraints.len())
            .map(Factor::Relative)
            .chain((0..graph.gps_constraints.len()).map(Factor::Gps))
            .collect();

        let anchor = graph.gauge_anchor.unwrap_or(graph.nodes[0].global_pose);
        let has_gps = !graph.gps_constraints.is_empty();
        match graph.initial_orientation_prior {
            Some(p) => factors.push(Factor::Orientation {
                node: 0,
                target: p.rotation,
                weight: p.weight,
            }),
            None if !has_gps => factors.push(Factor::Orientation {
                node: 0,
                target: anchor.rotation,
                weight: config.gauge_weight,
            }),
            None => {}
        }
        if !has_gps {
            factors.push(Factor::Position {
                node: 0,
                target: anchor.translation,
                weight: config.gauge_weight,
            });
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut link = |a: usize, b: usize| {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        };
        for c in &graph.relative_constraints {
            link(c.from_id, c.to_id);
        }
        for c in &graph.gps_constraints {
            link(c.node_before, c.node_after);
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut block_first: Vec<usize> = (0..n).collect();
        for (a, nbrs) in adjacency.iter().enumerate() {
            for &b in nbrs {
                let (pa, pb) = (perm[a], perm[b]);
                let (hi, lo) = if pa > pb { (pa, pb) } else { (pb, pa) };
                block_first[hi] = block_first[hi].min(lo);
            }
        }

        Problem {
            graph,
            factors,
            gps: config.gps_weighting,
            perm,
            block_first,
        }
    }

    fn dim(&self) -> usize {
        self.graph.nodes.len() * BLOCK
    }

    fn cost(&self, poses: &[Pose]) -> f64 {
        let mut total = 0.0;
        for f in &self.factors {
            total += match *f {
                Factor::Relative(k) => {
                    let c = &self.graph.relative_constraints[k];
                    relative_residual_jacobian(&poses[c.from_id], &poses[c.to_id], c)
                        .0
                        .norm_squared()
                }
                Factor::Gps(k) => {
                    let c = &self.graph.gps_constraints[k];
                    let (r, _, _) =
                        gps_residual_jacobian(&poses[c.node_before], &poses[c.node_after], c);
                    let w = self.gps.diagonal(&c.measurement.sigma_enu);
                    let s = w.component_mul(&r).norm_squared();
                    match self.gps.huber_delta {
                        Some(d) => huber_loss(s, d).0,
                        None => s,
                    }
                }
                Factor::Orientation { node, target, weight } => {
                    orientation_prior_residual(&poses[node], &target, weight)
                        .0
                        .norm_squared()
                }
                Factor::Position { node, target, weight } => {
                    position_prior_residual(&poses[node], &target, weight)
                        .0
                        .norm_squared()
                }
            };
        }
        total
    }

    /// Gauss-Newton system `H dx = -g` at `poses`, in reordered coordinates.
    /// Robust factors are reweighted by the loss derivative.
    fn linearize(&self, poses: &[Pose]) -> (SkylineMatrix, Vec<f64>) {
        let mut h = SkylineMatrix::for_blocks(&self.block_first);
        let mut g = vec![0.0; self.dim()];
        for f in &self.factors {
            match *f {
                Factor::Relative(k) => {
                    let c = &self.graph.relative_constraints[k];
                    let (r, ji, jj) =
                        relative_residual_jacobian(&poses[c.from_id], &poses[c.to_id], c);
                    self.accumulate(&mut h, &mut g, &r, &[(c.from_id, ji), (c.to_id, jj)], 1.0);
                }
                Factor::Gps(k) => {
                    let c = &self.graph.gps_constraints[k];
                    let (r, jn, jn1) =
                        gps_residual_jacobian(&poses[c.node_before], &poses[c.node_after], c);
                    let w = self.gps.diagonal(&c.measurement.sigma_enu);
                    let wm = SMatrix::<f64, 3, 3>::from_diagonal(&w);
                    let rw = w.component_mul(&r);
                    let rho_prime = match self.gps.huber_delta {
                        Some(d) => huber_loss(rw.norm_squared(), d).1,
                        None => 1.0,
                    };
                    self.accumulate(
                        &mut h,
                        &mut g,
                        &rw,
                        &[(c.node_before, wm * jn), (c.node_after, wm * jn1)],
                        rho_prime,
                    );
                }
                Factor::Orientation { node, target, weight } => {
                    let (r, j) = orientation_prior_residual(&poses[node], &target, weight);
                    self.accumulate(&mut h, &mut g, &r, &[(node, j)], 1.0);
                }
                Factor::Position { node, target, weight } => {
                    let (r, j) = position_prior_residual(&poses[node], &target, weight);
                    self.accumulate(&mut h, &mut g, &r, &[(node, j)], 1.0);
                }
            }
        }
        (h, g)
    }

    fn accumulate<const M: usize>(
        &self,
        h: &mut SkylineMatrix,
        g: &mut [f64],
        r: &SVector<f64, M>,
        blocks: &[(usize, SMatrix<f64, M, 6>)],
        weight: f64,
    ) {
        for (a, ja) in blocks {
            let pa = self.perm[*a] * BLOCK;
            let ga = ja.transpose() * r * weight;
            for k in 0..BLOCK {
                g[pa + k] += ga[k];
            }
            for (b, jb) in blocks {
                let pb = self.perm[*b] * BLOCK;
                if pb > pa {
                    continue;
                }
                let hab = ja.transpose() * jb * weight;
                for r_ in 0..BLOCK {
                    for c_ in 0..BLOCK {
                        let (i, j) = (pa + r_, pb + c_);
                        // Diagonal blocks: store each symmetric pair once.
                        if pa == pb && j > i {
                            continue;
                        }
                        h.add(i, j, hab[(r_, c_)]);
                    }
                }
            }
        }
    }

    fn apply_step(&self, poses: &[Pose], step: &[f64]) -> Vec<Pose> {
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let o = self.perm[i] * BLOCK;
                p.retract(&Vector6::from_column_slice(&step[o..o + BLOCK]))
            })
            .collect()
    }
}

/// Minimizes relative, GPS and prior costs over all node poses, starting
/// from the nodes' current global poses. The graph itself is not modified.
pub fn optimize(graph: &PoseGraph, config: &SolverConfig) -> Result<OptimizationResult, GraphError> {
    if graph.nodes.is_empty() {
        return Err(GraphError::Empty);
    }
    graph.check_connected()?;
    let problem = Problem::new(graph, config);
    let mut poses: Vec<Pose> = graph.nodes.iter().map(|n| n.global_pose).collect();
    let mut cost = problem.cost(&poses);
    if !cost.is_finite() {
        return Err(GraphError::NonFinite("initial cost"));
    }
    let initial_cost = cost;

    let (mut h, mut g) = problem.linearize(&poses);
    {
        let mut check = h.clone();
        if check.cholesky(SINGULAR_PIVOT_TOL).is_err() {
            return Err(GraphError::UnderConstrained);
        }
    }

    let mut lambda = config.initial_lambda;
    let mut iterations = 0;
    let mut converged = cost <= f64::MIN_POSITIVE;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let mut damped = h.clone();
        for i in 0..damped.dim() {
            let d = damped.diagonal(i).clamp(1e-6, 1e32);
            damped.add_diagonal(i, lambda * d);
        }
        let step = match damped.cholesky(0.0) {
            Ok(()) => {
                let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
                Some(damped.solve(&neg_g))
            }
            Err(_) => None,
        };
        let candidate = step.map(|s| problem.apply_step(&poses, &s));
        let new_cost = candidate.as_ref().map(|p| problem.cost(p)).unwrap_or(f64::INFINITY);
        if new_cost.is_finite() && new_cost < cost {
            let decrease = (cost - new_cost) / cost;
            poses = candidate.expect("finite cost implies a candidate");
            cost = new_cost;
            lambda = (lambda / config.lambda_factor).max(1e-12);
            if decrease < config.relative_tolerance || cost <= f64::MIN_POSITIVE {
                converged = true;
            } else {
                (h, g) = problem.linearize(&poses);
            }
        } else {
            lambda *= config.lambda_factor;
            if lambda > MAX_LAMBDA {
                // No descent direction left at machine precision.
                converged = true;
            }
        }
    }

    let last = graph.nodes.len() - 1;
    let correction = poses[last].compose(&graph.nodes[last].local_pose.inverse());
    Ok(OptimizationResult {
        poses,
        correction,
        report: OptimizationReport {
            iterations,
            initial_cost,
            final_cost: cost,
            converged,
        },
    })
}

/// Runs at most one optimization at a time on a snapshot of the graph while
/// the caller keeps inserting into the live graph.
#[derive(Debug, Default)]
pub struct BackgroundOptimizer {
    in_flight: Option<JoinHandle<Result<OptimizationResult, GraphError>>>,
}

impl BackgroundOptimizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    /// Starts optimizing a clone of `graph`. Returns false if a job is
    /// already in flight.
    pub fn try_start(&mut self, graph: &PoseGraph, config: &SolverConfig) -> bool {
        if self.in_flight.is_some() {
            return false;
        }
        let snapshot = graph.clone();
        let config = *config;
        self.in_flight = Some(std::thread::spawn(move || optimize(&snapshot, &config)));
        true
    }

    /// Returns the finished result without blocking, if any.
    pub fn poll(&mut self) -> Option<Result<OptimizationResult, GraphError>> {
        if self.in_flight.as_ref()?.is_finished() {
            self.wait()
        } else {
            None
        }
    }

    pub fn wait(&mut self) -> Option<Result<OptimizationResult, GraphError>> {
        let handle = self.in_flight.take()?;
        Some(handle.join().expect("optimizer thread panicked"))
    }
}
