//! Symmetric positive definite solves in skyline (profile) storage.
//!
//! Row `i` of the lower triangle is stored densely from its first structural
//! nonzero column up to the diagonal. Cholesky fill stays inside that envelope,
//! so a bandwidth-reducing permutation is all the symbolic work needed.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NotPositiveDefinite {
    pub row: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    /// Envelope covering every `(i, j)` in `edges` plus the diagonal.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for &(a, b) in edges {
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            first[hi] = first[hi].min(lo);
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        Self { first, start, values: vec![0.0; len] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Number of stored entries of the lower triangle.
    pub fn profile(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(lo >= self.first[hi], "entry outside envelope");
        self.start[hi] + lo - self.first[hi]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] += v;
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.start[i]..self.start[i + 1]]
    }

    /// In-place Cholesky factorization `A = L L^T`.
    pub fn factor(&mut self) -> Result<(), NotPositiveDefinite> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let (before, rest) = self.values.split_at_mut(self.start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let row_j = &before[self.start[j]..self.start[j + 1]];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / ljj;
            }
            let off = &row_i[..i - fi];
            let d = row_i[i - fi] - dot(off, off);
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite { row: i });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(())
    }

    /// Solves `L L^T x = b` in place using a completed factorization.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = dot(&row[..i - fi], &b[fi..i]);
            b[i] = (b[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (bk, &l) in b[fi..i].iter_mut().zip(&row[..i - fi]) {
                *bk -= l * xi;
            }
        }
    }
}

/// Dot product with four fixed accumulators; the summation order depends only
/// on the slice length, keeping results reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub(crate) fn reverse_cuthill_mckee(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for list in &mut adj {
        list.sort_by_key(|&v| (degree[v], v));
    }

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)).expect("unvisited node");
        let root = pseudo_peripheral(seed, &adj, &visited);
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], blocked: &[bool]) -> usize {
    let mut root = seed;
    let mut depth = 0;
    for _ in 0..8 {
        let (levels, last) = bfs_levels(root, adj, blocked);
        if levels <= depth {
            break;
        }
        depth = levels;
        root = last;
    }
    root
}

/// Eccentricity of `root` and a minimum-degree node in its last level.
fn bfs_levels(root: usize, adj: &[Vec<usize>], blocked: &[bool]) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut far = (0, root);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !blocked[v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
        let key = (dist[u], usize::MAX - adj[u].len());
        if key > (far.0, usize::MAX - adj[far.1].len()) {
            far = (dist[u], u);
        }
    }
    far
}

/// Envelope size of the lower triangle under permutation `perm[new] = old`.
pub(crate) fn envelope_size(perm: &[usize], edges: &[(usize, usize)]) -> usize {
    let n = perm.len();
    let mut pos = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        pos[old] = new;
    }
    let mut first: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (pa, pb) = (pos[a], pos[b]);
        let (hi, lo) = if pa > pb { (pa, pb) } else { (pb, pa) };
        first[hi] = first[hi].min(lo);
    }
    first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn laplacian_chain(n: usize, g: f64, leak: f64) -> (Vec<(usize, usize)>, DMatrix<f64>) {
        let mut edges = Vec::new();
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] += leak * (i + 1) as f64;
            if i + 1 < n {
                edges.push((i, i + 1));
                dense[(i, i)] += g;
                dense[(i + 1, i + 1)] += g;
                dense[(i, i + 1)] -= g;
                dense[(i + 1, i)] -= g;
            }
        }
        (edges, dense)
    }

    #[test]
    fn matches_dense_solve() {
        let n = 13;
        let (mut edges, mut dense) = laplacian_chain(n, 2.0, 0.1);
        // A few long-range couplings to exercise ragged envelopes.
        for &(a, b, g) in &[(0usize, 7usize, 0.5), (3, 12, 0.25), (5, 9, 1.5)] {
            edges.push((a, b));
            dense[(a, a)] += g;
            dense[(b, b)] += g;
            dense[(a, b)] -= g;
            dense[(b, a)] -= g;
        }
        let mut sky = Skyline::new(n, &edges);
        for i in 0..n {
            for j in 0..=i {
                if dense[(i, j)] != 0.0 {
                    sky.add(i, j, dense[(i, j)]);
                }
            }
        }
        sky.factor().unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = rhs.clone();
        sky.solve(&mut x);
        let expected = dense.clone().lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - expected[i]).abs() < 1e-12, "{i}: {} vs {}", x[i], expected[i]);
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut sky = Skyline::new(2, &[(0, 1)]);
        sky.add(0, 0, 1.0);
        sky.add(1, 1, 1.0);
        sky.add(1, 0, 2.0);
        assert_eq!(sky.factor(), Err(NotPositiveDefinite { row: 1 }));
    }

    #[test]
    fn rcm_is_a_permutation_and_shrinks_scrambled_chain() {
        let n = 40;
        // Chain visited in a scrambled labeling.
        let label: Vec<usize> = (0..n).map(|i| (i * 17) % n).collect();
        let edges: Vec<_> = (0..n - 1).map(|i| (label[i], label[i + 1])).collect();
        let perm = reverse_cuthill_mckee(n, &edges);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let identity: Vec<usize> = (0..n).collect();
        assert_eq!(envelope_size(&perm, &edges), 2 * n - 1);
        assert!(envelope_size(&identity, &edges) > 2 * n - 1);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        let b = vec![1.0; 7];
        assert_eq!(dot(&a, &b), 21.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }
}
