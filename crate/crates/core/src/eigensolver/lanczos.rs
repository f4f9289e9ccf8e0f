//! Lanczos with full reorthogonalization for the smallest eigenpairs of a
//! sparse symmetric matrix.
//!
//! The main run starts from the uniform vector `1/sqrt(n)`, which commutes with
//! node relabeling: a relabeled Laplacian produces the same tridiagonal up to
//! rounding, so the converged vectors agree entry-for-entry after relabeling.
//!
//! A single Krylov sequence only sees eigenvectors that overlap its start
//! vector. Graphs with automorphisms (paths, grids) have eigenvectors
//! orthogonal to the uniform vector, and repeated eigenvalues contribute one
//! direction per eigenspace. After the main run, the converged pairs are
//! locked and a deflated probe run from a seeded random vector looks for a
//! smaller eigenvalue in their orthogonal complement; any such pair replaces
//! the current largest one and the probe repeats.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::spectral_graph::SparseSymMatrix;

use super::tridiag::smallest_eigenpairs;

/// `beta` below this is treated as an invariant subspace.
pub(crate) const BREAKDOWN: f64 = 1e-14;
pub(crate) const RESTART_SEED: u64 = 0xC0FFEE;
/// Eigenvalues closer than this are considered one eigenspace.
pub const DEGENERACY_GAP: f64 = 1e-9;
const CHECK_EVERY: usize = 4;

pub(crate) struct Counter(pub u64);

impl Counter {
    fn add(&mut self, ops: u64) {
        self.0 += ops;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Classical Gram-Schmidt against `basis`; a second pass runs only when the
/// first removed most of the norm (Daniel-Gragg-Kaufman-Stewart test).
fn orthogonalize(w: &mut [f64], basis: &[&[f64]], ops: &mut Counter) {
    let mut before = norm(w);
    ops.add(2 * w.len() as u64);
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(-c, q, w);
        }
        let after = norm(w);
        ops.add(4 * (w.len() * basis.len()) as u64 + 2 * w.len() as u64);
        if after > FRAC_1_SQRT_2 * before {
            break;
        }
        before = after;
    }
}

pub(crate) struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residual_estimates: Vec<f64>,
    pub steps: usize,
    pub restarts: usize,
    /// The Krylov basis spans the whole complement of `locked`.
    pub exhausted: bool,
}

pub(crate) enum Verdict {
    Continue,
    Stop,
}

/// One Krylov sequence with full reorthogonalization against its own basis
/// and against `locked`. `verdict` sees the `want` smallest Ritz values and
/// their residual estimates at every check.
pub(crate) fn krylov_run(
    op: &SparseSymMatrix,
    start: Vec<f64>,
    locked: &[Vec<f64>],
    want: usize,
    max_steps: usize,
    rng: &mut XorShift64Star,
    ops: &mut Counter,
    mut verdict: impl FnMut(&[f64], &[f64]) -> Verdict,
) -> RitzPairs {
    let n = op.n();
    let capacity = n - locked.len();
    let locked_refs: Vec<&[f64]> = locked.iter().map(|v| v.as_slice()).collect();

    let fresh = |rng: &mut XorShift64Star, basis: &[Vec<f64>], ops: &mut Counter| -> Vec<f64> {
        loop {
            let mut r: Vec<f64> = (0..n).map(|_| rng.symmetric(1.0)).collect();
            let refs: Vec<&[f64]> = locked_refs.iter().copied().chain(basis.iter().map(|v| v.as_slice())).collect();
            orthogonalize(&mut r, &refs, ops);
            let nr = norm(&r);
            if nr > 1e-8 {
                r.iter_mut().for_each(|v| *v /= nr);
                return r;
            }
        }
    };

    let mut q0 = start;
    orthogonalize(&mut q0, &locked_refs, ops);
    let n0 = norm(&q0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    if n0 > 1e-8 {
        q0.iter_mut().for_each(|v| *v /= n0);
        basis.push(q0);
    } else {
        basis.push(fresh(rng, &basis, ops));
    }

    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last_beta;
    let mut restarts = 0;
    let mut steps = 0;
    loop {
        let j = basis.len() - 1;
        op.matvec(&basis[j], &mut w);
        ops.add(2 * op.nnz() as u64);
        let a = dot(&basis[j], &w);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        ops.add(6 * n as u64);
        let refs: Vec<&[f64]> = locked_refs.iter().copied().chain(basis.iter().map(|v| v.as_slice())).collect();
        orthogonalize(&mut w, &refs, ops);
        let b = norm(&w);
        ops.add(2 * n as u64);
        alpha.push(a);
        last_beta = b;
        steps += 1;

        let full = basis.len() >= capacity;
        let broke = b < BREAKDOWN;
        let due = basis.len() >= want && (basis.len() % CHECK_EVERY == 0 || full);
        if full || steps >= max_steps || (due && !broke) {
            let (vals, svecs, f) = smallest_eigenpairs(&alpha, &beta, want);
            ops.add(f);
            let res: Vec<f64> = svecs.iter().map(|s| (b * s[s.len() - 1]).abs()).collect();
            if full || steps >= max_steps || matches!(verdict(&vals, &res), Verdict::Stop) {
                break;
            }
        }
        if broke {
            beta.push(0.0);
            let r = fresh(rng, &basis, ops);
            basis.push(r);
            restarts += 1;
        } else {
            beta.push(b);
            let q: Vec<f64> = w.iter().map(|v| v / b).collect();
            ops.add(n as u64);
            basis.push(q);
        }
    }

    let k = alpha.len();
    let exhausted = basis.len() >= capacity;
    let (values, svecs, f) = smallest_eigenpairs(&alpha, &beta[..k - 1], want);
    ops.add(f);
    let residual_estimates = svecs.iter().map(|s| (last_beta * s[k - 1]).abs()).collect();
    let vectors = svecs
        .iter()
        .map(|s| {
            let mut y = vec![0.0; n];
            for (q, &c) in basis.iter().zip(s.iter()) {
                axpy(c, q, &mut y);
            }
            ops.add(2 * (n * k) as u64);
            y
        })
        .collect();
    RitzPairs { values, vectors, residual_estimates, steps, restarts, exhausted }
}

/// Rayleigh quotient and explicit residual norm of a unit-normalized copy.
pub(crate) fn refine_pair(op: &SparseSymMatrix, v: &mut [f64], ops: &mut Counter) -> (f64, f64) {
    let nv = norm(v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lv = vec![0.0; v.len()];
    op.matvec(v, &mut lv);
    let lambda = dot(v, &lv);
    axpy(-lambda, v, &mut lv);
    ops.add(2 * op.nnz() as u64 + 8 * v.len() as u64);
    (lambda, norm(&lv))
}

pub(crate) struct SparseOutcome {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub probes: usize,
}

/// Main run plus deflated probes; see the module docs.
pub(crate) fn sparse_smallest(
    op: &SparseSymMatrix,
    m: usize,
    tol: f64,
    refine_tol: f64,
    max_iter: usize,
    ops: &mut Counter,
) -> Result<SparseOutcome> {
    let n = op.n();
    let mut rng = XorShift64Star::new(RESTART_SEED);
    let target = refine_tol.min(tol);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut probes = 0;

    let uniform = vec![1.0 / (n as f64).sqrt(); n];
    let main = krylov_run(op, uniform, &[], m, max_iter, &mut rng, ops, |_, res| {
        if res.iter().all(|&r| r <= target) {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    });
    iterations += main.steps;
    restarts += main.restarts;
    let exhausted = main.exhausted;
    let mut pairs: Vec<(f64, Vec<f64>, f64)> = main
        .values
        .into_iter()
        .zip(main.vectors)
        .zip(main.residual_estimates)
        .map(|((v, x), r)| (v, x, r))
        .collect();

    while !exhausted && pairs.len() < n && iterations < max_iter {
        let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
        let ceiling = pairs.last().map(|p| p.0).unwrap_or(f64::INFINITY);
        let start: Vec<f64> = (0..n).map(|_| rng.symmetric(1.0)).collect();
        let probe = krylov_run(op, start, &locked, 1, max_iter - iterations, &mut rng, ops, |vals, res| {
            let below = vals[0] < ceiling - DEGENERACY_GAP;
            if res[0] <= target || (!below && res[0] <= tol) {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        });
        iterations += probe.steps;
        restarts += probe.restarts;
        probes += 1;
        let theta = probe.values[0];
        if theta < ceiling - DEGENERACY_GAP && probe.residual_estimates[0] <= tol {
            let vector = probe.vectors.into_iter().next().expect("one Ritz pair");
            let at = pairs.partition_point(|p| p.0 <= theta);
            pairs.insert(at, (theta, vector, probe.residual_estimates[0]));
            pairs.truncate(m);
        } else {
            break;
        }
    }

    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (_, mut v, _) in pairs {
        let (lambda, r) = refine_pair(op, &mut v, ops);
        values.push(lambda);
        vectors.push(v);
        residuals.push(r);
    }
    if residuals.iter().any(|&r| !(r <= tol)) {
        return Err(Error::Convergence { iterations, residuals });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let values = order.iter().map(|&i| values[i]).collect();
    let residuals = order.iter().map(|&i| residuals[i]).collect();
    let vectors = order.iter().map(|&i| vectors[i].clone()).collect();
    Ok(SparseOutcome { values, vectors, residuals, iterations, restarts, probes })
}
