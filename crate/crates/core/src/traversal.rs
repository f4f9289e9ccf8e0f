//! Spectral traversal: eigenvector-sorted token orders, the scatter back to
//! the grid, and propagation of orders through 2x2 downsampling.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::eigensolver::SpectralBasis;
use crate::error::{Error, Result};
use crate::flops::{self, Stage};
use crate::patch_embed::FeatureMap;
use crate::rng::XorShift64Star;
use crate::tensor_io::ImageTensor;

/// `2m` token orders: order `2j` sorts by eigenvector `j` ascending, order
/// `2j + 1` is its exact reverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalPlan {
    pub n: usize,
    pub m: usize,
    pub orders: Vec<Vec<usize>>,
    pub inverses: Vec<Vec<usize>>,
    pub source_shape: (usize, usize),
}

fn invert(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (rank, &node) in order.iter().enumerate() {
        inv[node] = rank;
    }
    inv
}

impl TraversalPlan {
    /// Wraps arbitrary orders (each used as-is, no reversal added).
    pub fn from_orders(orders: Vec<Vec<usize>>, source_shape: (usize, usize)) -> Result<Self> {
        let n = source_shape.0 * source_shape.1;
        for (t, order) in orders.iter().enumerate() {
            let mut seen = vec![false; n];
            if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::arg(format!("order {t} is not a permutation of 0..{n}")));
            }
        }
        let inverses = orders.iter().map(|o| invert(o)).collect();
        Ok(Self { n, m: orders.len() / 2, orders, inverses, source_shape })
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn order(&self, t: usize) -> &[usize] {
        &self.orders[t]
    }

    pub fn direction(t: usize) -> &'static str {
        if t % 2 == 0 {
            "asc"
        } else {
            "desc"
        }
    }

    /// One line per order: `order <t> <asc|desc>: i0 i1 ...`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (t, order) in self.orders.iter().enumerate() {
            let _ = write!(s, "order {t} {}:", Self::direction(t));
            for i in order {
                let _ = write!(s, " {i}");
            }
            s.push('\n');
        }
        s
    }

    /// Grayscale image on the token grid with intensity `rank / n` under order `t`.
    pub fn rank_map(&self, t: usize) -> ImageTensor {
        let (hp, wp) = self.source_shape;
        let inv = &self.inverses[t];
        let n = self.n as f32;
        ImageTensor::from_fn(hp, wp, 3, |i, j, _| inv[i * wp + j] as f32 / n).expect("ranks lie in [0, 1)")
    }
}

/// Sorts node indices by eigenvector `j`, breaking exact ties by the later
/// eigenvectors in turn and finally by node index.
pub fn build_plan(basis: &SpectralBasis, shape: (usize, usize)) -> Result<TraversalPlan> {
    let n = basis.n();
    if shape.0 * shape.1 != n {
        return Err(Error::arg(format!("basis has {n} nodes but the grid is {}x{}", shape.0, shape.1)));
    }
    let m = basis.m();
    let mut orders = Vec::with_capacity(2 * m);
    for j in 0..m {
        let mut asc: Vec<usize> = (0..n).collect();
        asc.sort_by(|&a, &b| {
            (j..m)
                .map(|k| basis.vector(k)[a].total_cmp(&basis.vector(k)[b]))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or_else(|| a.cmp(&b))
        });
        let desc = asc.iter().rev().copied().collect();
        orders.push(asc);
        orders.push(desc);
    }
    let inverses = orders.iter().map(|o| invert(o)).collect();
    Ok(TraversalPlan { n, m, orders, inverses, source_shape: shape })
}

/// `n` tokens of `channels` values in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub channels: usize,
    pub data: Vec<f64>,
}

impl TokenSequence {
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() % channels != 0 {
            return Err(Error::shape(format!("{} values do not split into {channels}-channel tokens", data.len())));
        }
        Ok(Self { channels, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }
}

/// Gathers `f` along every order of `plan`.
pub fn apply_scan(f: &FeatureMap, plan: &TraversalPlan) -> Result<Vec<TokenSequence>> {
    if f.tokens() != plan.n {
        return Err(Error::shape(format!("feature map has {} tokens, plan has {}", f.tokens(), plan.n)));
    }
    Ok(plan
        .orders
        .iter()
        .map(|order| TokenSequence {
            channels: f.channels(),
            data: order.iter().flat_map(|&i| f.token(i).iter().copied()).collect(),
        })
        .collect())
}

/// How the `2m` scattered copies of each token are combined into one.
#[derive(Debug, Clone, PartialEq)]
pub enum MergeWeights {
    /// Per-channel running mean; exact when all copies agree.
    Mean,
    /// Per-channel sum of the copies.
    Sum,
    /// Concatenation in sequence order (`2mC` values) mapped to `C` channels.
    Projection {
        /// `(2m C) x C`, row-major.
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
}

impl MergeWeights {
    /// Projection that averages the copies of each channel.
    pub fn averaging_projection(sequences: usize, channels: usize) -> Self {
        let mut weight = vec![0.0f32; sequences * channels * channels];
        for t in 0..sequences {
            for c in 0..channels {
                weight[(t * channels + c) * channels + c] = 1.0 / sequences as f32;
            }
        }
        MergeWeights::Projection { weight, bias: vec![0.0; channels] }
    }

    /// Projection that keeps sequence `t` and drops the rest.
    pub fn selector(t: usize, sequences: usize, channels: usize) -> Self {
        let mut weight = vec![0.0f32; sequences * channels * channels];
        for c in 0..channels {
            weight[(t * channels + c) * channels + c] = 1.0;
        }
        MergeWeights::Projection { weight, bias: vec![0.0; channels] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MergeWeights::Mean => "mean",
            MergeWeights::Sum => "sum",
            MergeWeights::Projection { .. } => "concat_proj",
        }
    }
}

/// Scatters each sequence back to grid order and merges the copies per token.
pub fn merge_scan(seqs: &[TokenSequence], plan: &TraversalPlan, mix: &MergeWeights) -> Result<FeatureMap> {
    if seqs.len() != plan.len() {
        return Err(Error::shape(format!("{} sequences for a plan of {} orders", seqs.len(), plan.len())));
    }
    let channels = seqs.first().map(|s| s.channels).ok_or_else(|| Error::shape("no sequences to merge"))?;
    if let Some(s) = seqs.iter().find(|s| s.channels != channels || s.len() != plan.n) {
        return Err(Error::shape(format!(
            "sequence of {} tokens x {} channels, expected {} x {channels}",
            s.len(),
            s.channels,
            plan.n
        )));
    }
    let (hp, wp) = plan.source_shape;
    let t_count = seqs.len();
    let mut out = FeatureMap::zeros(hp, wp, channels);
    let n = plan.n as u64;
    match mix {
        MergeWeights::Mean => {
            for i in 0..plan.n {
                let dst = out.token_mut(i);
                for (t, s) in seqs.iter().enumerate() {
                    let src = s.token(plan.inverses[t][i]);
                    let k = (t + 1) as f64;
                    dst.iter_mut().zip(src).for_each(|(d, x)| *d += (x - *d) / k);
                }
            }
            flops::add(Stage::Merge, 3 * n * (t_count * channels) as u64);
        }
        MergeWeights::Sum => {
            for i in 0..plan.n {
                let dst = out.token_mut(i);
                for (t, s) in seqs.iter().enumerate() {
                    dst.iter_mut().zip(s.token(plan.inverses[t][i])).for_each(|(d, x)| *d += x);
                }
            }
            flops::add(Stage::Merge, n * (t_count * channels) as u64);
        }
        MergeWeights::Projection { weight, bias } => {
            let rows = t_count * channels;
            if weight.len() != rows * channels || bias.len() != channels {
                return Err(Error::shape(format!(
                    "merge projection is {} + {} values, expected {rows}x{channels} + {channels}",
                    weight.len(),
                    bias.len()
                )));
            }
            for i in 0..plan.n {
                let dst = out.token_mut(i);
                dst.iter_mut().zip(bias).for_each(|(d, &b)| *d = b as f64);
                for (t, s) in seqs.iter().enumerate() {
                    for (ci, &x) in s.token(plan.inverses[t][i]).iter().enumerate() {
                        let row = &weight[(t * channels + ci) * channels..][..channels];
                        dst.iter_mut().zip(row).for_each(|(d, &w)| *d += w as f64 * x);
                    }
                }
            }
            flops::add(Stage::Merge, 2 * n * (rows * channels) as u64);
        }
    }
    Ok(out)
}

/// For every cell of the pooled grid, the input cell (row-major index) it copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndexMap {
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling by feature L2 norm; ties go to the earliest cell in
/// row-major order.
pub fn pool_indices(f: &FeatureMap) -> Result<(FeatureMap, PoolIndexMap)> {
    let (hp, wp) = f.shape();
    if hp % 2 != 0 || wp % 2 != 0 || hp == 0 || wp == 0 {
        return Err(Error::shape(format!("cannot 2x2-pool a {hp}x{wp} grid")));
    }
    let (oh, ow) = (hp / 2, wp / 2);
    let norm2 = |i: usize| f.token(i).iter().map(|v| v * v).sum::<f64>();
    let mut argmax = Vec::with_capacity(oh * ow);
    let mut data = Vec::with_capacity(oh * ow * f.channels());
    for r in 0..oh {
        for c in 0..ow {
            let window = [
                2 * r * wp + 2 * c,
                2 * r * wp + 2 * c + 1,
                (2 * r + 1) * wp + 2 * c,
                (2 * r + 1) * wp + 2 * c + 1,
            ];
            let mut best = window[0];
            let mut best_norm = norm2(best);
            for &i in &window[1..] {
                let v = norm2(i);
                if v > best_norm {
                    best = i;
                    best_norm = v;
                }
            }
            argmax.push(best);
            data.extend_from_slice(f.token(best));
        }
    }
    let pooled = FeatureMap::new(oh, ow, f.channels(), data)?;
    Ok((pooled, PoolIndexMap { in_shape: (hp, wp), out_shape: (oh, ow), argmax }))
}

/// Gathers every eigenvector at the pooled cells and rebuilds the plan on the
/// smaller grid. Eigenvalues are carried over unchanged.
pub fn downsample_plan(
    plan: &TraversalPlan,
    basis: &SpectralBasis,
    pool: &PoolIndexMap,
) -> Result<(TraversalPlan, SpectralBasis)> {
    let (hp, wp) = plan.source_shape;
    if pool.in_shape != plan.source_shape || pool.out_shape != (hp / 2, wp / 2) || basis.n() != plan.n {
        return Err(Error::shape(format!(
            "pool {:?} -> {:?} does not halve the {hp}x{wp} plan",
            pool.in_shape, pool.out_shape
        )));
    }
    let vectors: Vec<f64> = basis.vectors().flat_map(|u| pool.argmax.iter().map(move |&i| u[i])).collect();
    let gathered = SpectralBasis::new(pool.argmax.len(), basis.values().to_vec(), vectors)?;
    let plan = build_plan(&gathered, pool.out_shape)?;
    Ok((plan, gathered))
}

/// Number of adjacent pairs along `order` whose labels differ.
pub fn boundary_crossings<L: PartialEq>(order: &[usize], labels: &[L]) -> usize {
    order.windows(2).filter(|w| labels[w[0]] != labels[w[1]]).count()
}

pub fn raster_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    XorShift64Star::new(seed).permutation(n)
}

/// Smallest eigenvector whose values strictly separate the two label classes.
pub fn separating_eigenvector(basis: &SpectralBasis, labels: &[bool]) -> Option<usize> {
    (0..basis.m()).find(|&j| {
        let u = basis.vector(j);
        let range = |side: bool| {
            u.iter()
                .zip(labels)
                .filter(|(_, &l)| l == side)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)))
        };
        let (a, b) = (range(false), range(true));
        a.1 < b.0 || b.1 < a.0
    })
}
