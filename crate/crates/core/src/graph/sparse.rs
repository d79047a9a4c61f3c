//! Symmetric positive-definite solves for the normal equations.
//!
//! Pose-graph Hessians are block-sparse with 6x6 blocks. Blocks are reordered
//! with reverse Cuthill-McKee to keep the profile narrow (a closed loop
//! becomes a band), then factored with an envelope (skyline) Cholesky, where
//! fill-in stays inside the profile.

use std::collections::VecDeque;

pub const BLOCK: usize = 6;

/// Reverse Cuthill-McKee ordering of an undirected graph given as adjacency
/// lists. Returns `perm` with `perm[old] = new`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        // Start each component from a pseudo-peripheral node: min degree,
        // then the farthest node found by one BFS sweep.
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        let start = farthest(adjacency, &degree, seed);

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            next.dedup();
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }

    let mut perm = vec![0; n];
    for (new, &old) in order.iter().rev().enumerate() {
        perm[old] = new;
    }
    perm
}

fn farthest(adjacency: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let n = adjacency.len();
    let mut dist = vec![usize::MAX; n];
    dist[seed] = 0;
    let mut queue = VecDeque::from([seed]);
    let mut best = (0, degree[seed], seed);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > best.0 || (d == best.0 && (degree[v], v) < (best.1, best.2)) {
            best = (d, degree[v], v);
        }
        for &u in &adjacency[v] {
            if dist[u] == usize::MAX {
                dist[u] = d + 1;
                queue.push_back(u);
            }
        }
    }
    best.2
}

/// Lower triangle of a symmetric matrix stored row by row from each row's
/// first nonzero column to the diagonal.
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineMatrix {
    /// `first[i]` is the first stored column of row `i` (`<= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            row_start.push(acc);
            acc += i - f + 1;
        }
        row_start.push(acc);
        SkylineMatrix {
            n,
            first,
            row_start,
            data: vec![0.0; acc],
        }
    }

    /// Profile for a block matrix whose nonzero blocks are given by
    /// `block_first[b]`, the smallest block column touching block row `b`.
    pub fn for_blocks(block_first: &[usize]) -> Self {
        let mut first = Vec::with_capacity(block_first.len() * BLOCK);
        for &bf in block_first {
            for _ in 0..BLOCK {
                first.push(bf * BLOCK);
            }
        }
        Self::new(first)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i]);
        self.row_start[i] + (j - self.first[i])
    }

    /// Adds `v` at `(i, j)` of the symmetric matrix; `(j, i)` is implied.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let k = self.index(i, j);
        self.data[k] += v;
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.data[self.index(i, i)]
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        let k = self.index(i, i);
        self.data[k] += v;
    }

    /// In-place `L L^T` factorization. Fails at the first row whose pivot is
    /// not larger than `rel_pivot_tol` times the original diagonal entry.
    pub fn cholesky(&mut self, rel_pivot_tol: f64) -> Result<(), usize> {
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..i {
                let fj = self.first[j];
                let rj = self.row_start[j];
                let k0 = fi.max(fj);
                let mut s = self.data[ri + (j - fi)];
                let a = &self.data[ri + (k0 - fi)..ri + (j - fi)];
                let b = &self.data[rj + (k0 - fj)..rj + (j - fj)];
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let ljj = self.data[rj + (j - fj)];
                self.data[ri + (j - fi)] = s / ljj;
            }
            let diag_idx = ri + (i - fi);
            let orig = self.data[diag_idx];
            let row = &self.data[ri..diag_idx];
            let s = orig - row.iter().map(|x| x * x).sum::<f64>();
            if !(s > rel_pivot_tol * orig.abs()) || !s.is_finite() {
                return Err(i);
            }
            self.data[diag_idx] = s.sqrt();
        }
        Ok(())
    }

    /// Solves `L L^T x = b` with a factored matrix.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.data[ri + (j - fi)] * y[j];
            }
            y[i] = s / self.data[ri + (i - fi)];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            y[i] /= self.data[ri + (i - fi)];
            let yi = y[i];
            for j in fi..i {
                y[j] -= self.data[ri + (j - fi)] * yi;
            }
        }
        y
    }
}
