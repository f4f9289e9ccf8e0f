//! Smallest eigenpairs of the normalized Laplacian and their sign convention.

mod dense;
mod lanczos;
mod tridiag;

pub use dense::{dense_eig_oracle, DenseEig};
pub use lanczos::DEGENERACY_GAP;

use crate::error::{Error, Result};
use crate::flops::{self, Stage};
use crate::spectral_graph::SparseSymMatrix;

use lanczos::{refine_pair, sparse_smallest, Counter};

/// The `m` smallest eigenpairs, ascending, one unit vector per eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    n: usize,
    values: Vec<f64>,
    /// Vector `j` occupies `vectors[j * n..(j + 1) * n]`.
    vectors: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(n: usize, values: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != n * values.len() {
            return Err(Error::shape(format!(
                "{} vector entries for {} vectors of length {n}",
                vectors.len(),
                values.len()
            )));
        }
        Ok(Self { n, values, vectors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.n.max(1)).take(self.m())
    }

    /// Index pairs `(i, j)`, `i < j`, whose eigenvalues differ by less than `gap`.
    pub fn degenerate_pairs(&self, gap: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.m() {
            for j in i + 1..self.m() {
                if (self.values[i] - self.values[j]).abs() < gap {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Same eigenpairs with node `i` of the result taken from node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for v in self.vectors() {
            vectors.extend(perm.iter().map(|&p| v[p]));
        }
        Self { n: self.n, values: self.values.clone(), vectors }
    }
}

/// How the `u` vs `-u` ambiguity of each eigenvector is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignRule {
    /// First entry (by node index) with magnitude above the threshold is positive.
    FirstNonzero,
    /// Decided by values alone, independent of node labels: the third moment
    /// `sum u_i^3` is positive; if it vanishes, the largest-magnitude entry is
    /// positive; if that ties too, falls back to [`SignRule::FirstNonzero`].
    #[default]
    Moment,
}

impl SignRule {
    pub fn name(self) -> &'static str {
        match self {
            SignRule::FirstNonzero => "first_nonzero",
            SignRule::Moment => "moment",
        }
    }
}

impl std::str::FromStr for SignRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_nonzero" => Ok(SignRule::FirstNonzero),
            "moment" => Ok(SignRule::Moment),
            other => Err(Error::arg(format!("unknown sign rule {other:?}"))),
        }
    }
}

fn first_nonzero_sign(u: &[f64], eps: f64) -> Option<f64> {
    u.iter().find(|v| v.abs() > eps).map(|v| v.signum())
}

fn moment_sign(u: &[f64], eps: f64) -> Option<f64> {
    let third: f64 = u.iter().map(|v| v * v * v).sum();
    if third.abs() > eps {
        return Some(third.signum());
    }
    let top_pos = u.iter().copied().fold(0.0f64, f64::max);
    let top_neg = u.iter().copied().fold(0.0f64, f64::min).abs();
    if (top_pos - top_neg).abs() > eps {
        return Some(if top_pos > top_neg { 1.0 } else { -1.0 });
    }
    first_nonzero_sign(u, eps)
}

/// Flips each eigenvector so its first entry above `eps` in magnitude is positive.
pub fn canonicalize_signs(basis: &SpectralBasis, eps: f64) -> Result<SpectralBasis> {
    canonicalize_signs_with(basis, SignRule::FirstNonzero, eps)
}

pub fn canonicalize_signs_with(basis: &SpectralBasis, rule: SignRule, eps: f64) -> Result<SpectralBasis> {
    let mut out = basis.clone();
    let n = basis.n;
    for j in 0..basis.m() {
        let u = &mut out.vectors[j * n..(j + 1) * n];
        let sign = match rule {
            SignRule::FirstNonzero => first_nonzero_sign(u, eps),
            SignRule::Moment => moment_sign(u, eps),
        }
        .ok_or(Error::DegenerateVector { index: j, threshold: eps })?;
        if sign < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigConfig {
    pub m: usize,
    /// Required explicit residual `|L u - lambda u|`.
    pub tol: f64,
    /// Iteration continues until estimated residuals reach this; converged
    /// vectors then agree across node relabelings far below entry spacing.
    pub refine_tol: f64,
    /// Total Lanczos steps; `None` means `10 n`.
    pub max_iter: Option<usize>,
    pub eps_sign: f64,
    /// Matrices with `n <= dense_threshold` go straight to Jacobi.
    pub dense_threshold: usize,
    pub sign_rule: SignRule,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            m: 4,
            tol: 1e-8,
            refine_tol: 1e-12,
            max_iter: None,
            eps_sign: 1e-12,
            dense_threshold: 64,
            sign_rule: SignRule::Moment,
        }
    }
}

impl EigConfig {
    pub fn with_m(m: usize) -> Self {
        Self { m, ..Self::default() }
    }
}

/// Diagnostics of one factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct EigReport {
    pub used_dense: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub probes: usize,
    /// Explicit `|L u - lambda u|` per returned pair.
    pub residuals: Vec<f64>,
    pub flops: u64,
}

/// The `cfg.m` smallest eigenpairs of symmetric `l`, sign-canonicalized.
pub fn lanczos_smallest(l: &SparseSymMatrix, cfg: &EigConfig) -> Result<(SpectralBasis, EigReport)> {
    let n = l.n();
    let m = cfg.m;
    if m == 0 || m > n {
        return Err(Error::arg(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::arg(format!("tol must be positive, got {}", cfg.tol)));
    }
    let mut ops = Counter(0);
    let (values, vectors, report) = if n <= cfg.dense_threshold {
        let eig = dense_eig_oracle(&l.to_dense(), n)?;
        ops.0 += 12 * (n * eig.rotations) as u64 + (n * n) as u64 * eig.sweeps as u64;
        let mut values = Vec::with_capacity(m);
        let mut vectors = Vec::with_capacity(m * n);
        let mut residuals = Vec::with_capacity(m);
        for k in 0..m {
            let mut v = eig.vector(k).to_vec();
            let (lambda, r) = refine_pair(l, &mut v, &mut ops);
            values.push(lambda);
            vectors.extend(v);
            residuals.push(r);
        }
        let report = EigReport { used_dense: true, iterations: eig.sweeps, restarts: 0, probes: 0, residuals, flops: 0 };
        (values, vectors, report)
    } else {
        let max_iter = cfg.max_iter.unwrap_or(10 * n);
        let out = sparse_smallest(l, m, cfg.tol, cfg.refine_tol, max_iter, &mut ops)?;
        let report = EigReport {
            used_dense: false,
            iterations: out.iterations,
            restarts: out.restarts,
            probes: out.probes,
            residuals: out.residuals,
            flops: 0,
        };
        (out.values, out.vectors.concat(), report)
    };
    flops::add(Stage::Eigensolver, ops.0);
    let report = EigReport { flops: ops.0, ..report };
    let basis = SpectralBasis { n, values, vectors };
    let basis = canonicalize_signs_with(&basis, cfg.sign_rule, cfg.eps_sign)?;
    Ok((basis, report))
}
