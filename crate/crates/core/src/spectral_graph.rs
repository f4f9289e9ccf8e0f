//! k-nearest-neighbor affinity graph over patch features and its symmetric
//! normalized Laplacian `L = I - D^{-1/2} W D^{-1/2}`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flops::{self, Stage};
use crate::patch_embed::FeatureMap;

/// Row-major list of node feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    dim: usize,
    data: Vec<f64>,
}

impl NodeFeatures {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::shape(format!("{} values do not split into {dim}-vectors", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Reorders nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.get(p));
        }
        Self { dim: self.dim, data }
    }
}

/// Node `i = r * wp + c` carries the feature at grid cell `(r, c)`.
pub fn flatten_features(f: &FeatureMap) -> NodeFeatures {
    NodeFeatures { dim: f.channels(), data: f.data().to_vec() }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sqdist_flops(dim: usize) -> u64 {
    (3 * dim).saturating_sub(1) as u64
}

/// Strict upper triangle of squared pairwise distances.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    n: usize,
    upper: Vec<f64>,
}

impl PairwiseDistances {
    pub fn compute(features: &NodeFeatures) -> Self {
        let n = features.len();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            let fi = features.get(i);
            for j in i + 1..n {
                upper.push(squared_distance(fi, features.get(j)));
            }
        }
        flops::add(Stage::Distances, upper.len() as u64 * sqdist_flops(features.dim()));
        Self { n, upper }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    #[inline]
    pub fn squared(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.upper[self.index(i, j)]
        }
    }

    /// Mean Euclidean distance over unordered pairs, floored at `floor`.
    ///
    /// Distances are summed in sorted order, so the result does not depend on
    /// node labeling.
    pub fn mean_distance(&self, floor: f64) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::arg(format!("bandwidth needs at least 2 nodes, got {}", self.n)));
        }
        let mut d: Vec<f64> = self.upper.iter().map(|s| s.sqrt()).collect();
        d.sort_unstable_by(f64::total_cmp);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        flops::add(Stage::Distances, 2 * d.len() as u64 + 1);
        Ok(mean.max(floor))
    }

    /// The `k` nearest other nodes of every node, nearest first; equal
    /// distances go to the smaller node index.
    pub fn knn(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let n = self.n;
        if k == 0 || k >= n {
            return Err(Error::arg(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
        }
        let mut out = Vec::with_capacity(n);
        let mut row: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| (self.squared(i, j), j)));
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < row.len() {
                row.select_nth_unstable_by(k - 1, cmp);
                row.truncate(k);
            }
            row.sort_unstable_by(cmp);
            out.push(row.iter().map(|&(_, j)| j).collect());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub k: usize,
    pub sigma_floor: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { k: 5, sigma_floor: 1e-12 }
    }
}

/// Mean pairwise Euclidean distance over all unordered pairs, floored at `floor`.
pub fn sigma_estimate(features: &NodeFeatures, floor: f64) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::arg(format!("bandwidth needs at least 2 nodes, got {}", features.len())));
    }
    PairwiseDistances::compute(features).mean_distance(floor)
}

pub fn knn_neighbors(features: &NodeFeatures, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k >= features.len() {
        return Err(Error::arg(format!("k must satisfy 1 <= k < n, got k={k}, n={}", features.len())));
    }
    PairwiseDistances::compute(features).knn(k)
}

/// Symmetric sparse matrix in compressed sparse row form.
///
/// Both triangles are stored; column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from `(i, j, v)` triplets listing each off-diagonal pair once
    /// (either orientation) and diagonal entries once. Zero values are dropped.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::arg(format!("entry ({i}, {j}) outside {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::arg(format!("entry ({i}, {j}) is not finite")));
            }
            if v == 0.0 {
                continue;
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        Self::from_rows(n, rows)
    }

    /// Builds from full symmetric triplets (both `(i,j)` and `(j,i)` present).
    pub fn from_full_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::arg(format!("entry ({i}, {j}) outside {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::arg(format!("entry ({i}, {j}) is not finite")));
            }
            if v != 0.0 {
                rows[i].push((j, v));
            }
        }
        let m = Self::from_rows(n, rows)?;
        for i in 0..n {
            for (j, v) in m.row(i) {
                if m.get(j, i) != v {
                    return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(m)
    }

    fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::arg(format!("duplicate entry ({i}, {})", w[0].0)));
                }
            }
            col_idx.extend(row.iter().map(|&(j, _)| j));
            values.extend(row.iter().map(|&(_, v)| v));
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Heap bytes held by the three CSR arrays.
    pub fn heap_bytes(&self) -> usize {
        (self.row_ptr.len() + self.col_idx.len()) * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<f64>()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// `P A P^T` where new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::shape(format!("permutation of {} for {} nodes", perm.len(), self.n)));
        }
        let mut new_of_old = vec![usize::MAX; self.n];
        for (new, &old) in perm.iter().enumerate() {
            new_of_old[old] = new;
        }
        let rows = perm
            .iter()
            .map(|&old| self.row(old).map(|(j, v)| (new_of_old[j], v)).collect())
            .collect();
        Self::from_rows(self.n, rows)
    }

    /// `i j value` per stored entry, row-major, one per line.
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:e}");
            }
        }
        s
    }

    /// Parses the triplet format; node count is the largest index plus one
    /// unless a `# n <count>` line is present.
    pub fn from_triplet_text(text: &str) -> Result<Self> {
        let mut triplets = Vec::new();
        let mut n_decl = None;
        let mut offset = 0;
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("n") {
                    n_decl = it.next().and_then(|v| v.parse::<usize>().ok());
                }
            } else if !trimmed.is_empty() {
                let parts: Vec<&str> = trimmed.split_whitespace().collect();
                let parsed = match parts.as_slice() {
                    [i, j, v] => i.parse::<usize>().ok().zip(j.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
                    _ => None,
                };
                let ((i, j), v) = parsed.ok_or_else(|| Error::parse(offset, format!("bad triplet line {trimmed:?}")))?;
                triplets.push((i, j, v));
            }
            offset += line.len() + 1;
        }
        let n = n_decl.unwrap_or_else(|| triplets.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
        Self::from_full_triplets(n, &triplets)
    }
}

/// Gaussian affinity `exp(-|f_i - f_j|^2 / (2 sigma^2))` on every pair where
/// either endpoint lists the other among its nearest neighbors.
pub fn build_adjacency(features: &NodeFeatures, neighbors: &[Vec<usize>], sigma: f64) -> Result<SparseSymMatrix> {
    let n = features.len();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    if neighbors.len() != n {
        return Err(Error::shape(format!("{} neighbor lists for {n} nodes", neighbors.len())));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, list) in neighbors.iter().enumerate() {
        for &j in list {
            if j >= n {
                return Err(Error::arg(format!("neighbor {j} of node {i} out of range")));
            }
            if j != i {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let scale = -1.0 / (2.0 * sigma * sigma);
    let triplets: Vec<(usize, usize, f64)> = pairs
        .iter()
        .map(|&(i, j)| (i, j, (squared_distance(features.get(i), features.get(j)) * scale).exp()))
        .collect();
    flops::add(Stage::Adjacency, pairs.len() as u64 * (sqdist_flops(features.dim()) + 2));
    // exp underflow on very distant pairs leaves no stored entry, matching "absent"
    SparseSymMatrix::from_upper_triplets(n, &triplets)
}

/// `L = I - D^{-1/2} W D^{-1/2}` with unit diagonal.
pub fn normalized_laplacian(w: &SparseSymMatrix) -> Result<SparseSymMatrix> {
    let n = w.n();
    let mut inv_sqrt = Vec::with_capacity(n);
    let mut scratch = Vec::new();
    let mut ops = 0u64;
    for i in 0..n {
        scratch.clear();
        scratch.extend(w.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v));
        // sorted summation keeps degrees independent of node labeling
        scratch.sort_unstable_by(f64::total_cmp);
        let d: f64 = scratch.iter().sum();
        ops += scratch.len().saturating_sub(1) as u64 + 2;
        if !(d > 0.0) {
            return Err(Error::IsolatedNode { node: i });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = w
            .row(i)
            .filter(|&(j, _)| j != i)
            .map(|(j, v)| (j, -v * (inv_sqrt[i] * inv_sqrt[j])))
            .collect();
        ops += 2 * row.len() as u64;
        row.push((i, 1.0));
        rows.push(row);
    }
    flops::add(Stage::Laplacian, ops);
    SparseSymMatrix::from_rows(n, rows)
}

/// Everything spectral traversal needs from the patch graph.
#[derive(Debug, Clone)]
pub struct PatchGraph {
    pub sigma: f64,
    pub neighbors: Vec<Vec<usize>>,
    pub adjacency: SparseSymMatrix,
    pub laplacian: SparseSymMatrix,
}

impl PatchGraph {
    /// Computes pairwise distances once and derives bandwidth, neighbors,
    /// affinities and the Laplacian from them.
    pub fn build(features: &NodeFeatures, cfg: &GraphConfig) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::arg(format!("graph needs at least 2 nodes, got {n}")));
        }
        if cfg.k == 0 || cfg.k >= n {
            return Err(Error::arg(format!("k must satisfy 1 <= k < n, got k={}, n={n}", cfg.k)));
        }
        let dist = PairwiseDistances::compute(features);
        let sigma = dist.mean_distance(cfg.sigma_floor)?;
        let neighbors = dist.knn(cfg.k)?;
        drop(dist);
        let adjacency = build_adjacency(features, &neighbors, sigma)?;
        let laplacian = normalized_laplacian(&adjacency)?;
        Ok(Self { sigma, neighbors, adjacency, laplacian })
    }
}
