//! Smallest eigenpairs of a symmetric tridiagonal matrix by Sturm bisection
//! and inverse iteration.

use crate::rng::XorShift64Star;

const INVERSE_ITERATIONS: usize = 3;

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, pivot_floor: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    for i in 0..diag.len() {
        if i > 0 {
            let b = off[i - 1];
            q = diag[i] - x - b * b / q;
        }
        if q.abs() < pivot_floor {
            q = -pivot_floor;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T - shift I) x = rhs` in place by Gaussian elimination with
/// partial pivoting.
fn shifted_solve(diag: &[f64], off: &[f64], shift: f64, rhs: &mut [f64], pivot_floor: f64) {
    let k = diag.len();
    // u[i] holds columns i, i+1, i+2 of the upper factor's row i
    let mut u = vec![[0.0f64; 3]; k];
    let mut mult = vec![0.0f64; k];
    let mut swapped = vec![false; k];
    let mut cur = [diag[0] - shift, off.first().copied().unwrap_or(0.0), 0.0];
    for i in 0..k.saturating_sub(1) {
        let next = [off[i], diag[i + 1] - shift, if i + 2 < k { off[i + 1] } else { 0.0 }];
        if cur[0].abs() >= next[0].abs() {
            if cur[0] == 0.0 {
                cur[0] = pivot_floor;
            }
            let l = next[0] / cur[0];
            u[i] = cur;
            mult[i] = l;
            cur = [next[1] - l * cur[1], next[2] - l * cur[2], 0.0];
        } else {
            let l = cur[0] / next[0];
            u[i] = next;
            mult[i] = l;
            swapped[i] = true;
            cur = [cur[1] - l * next[1], cur[2] - l * next[2], 0.0];
        }
    }
    if cur[0].abs() < pivot_floor {
        cur[0] = if cur[0] < 0.0 { -pivot_floor } else { pivot_floor };
    }
    u[k - 1] = cur;
    for i in 0..k.saturating_sub(1) {
        if swapped[i] {
            rhs.swap(i, i + 1);
        }
        rhs[i + 1] -= mult[i] * rhs[i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        if i + 1 < k {
            s -= u[i][1] * rhs[i + 1];
        }
        if i + 2 < k {
            s -= u[i][2] * rhs[i + 2];
        }
        rhs[i] = s / u[i][0];
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Eigenpairs for the `count` smallest eigenvalues of the tridiagonal with
/// diagonal `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`).
///
/// Returns `(values, vectors, flops)`; each vector has `diag.len()` entries.
pub(crate) fn smallest_eigenpairs(diag: &[f64], off: &[f64], count: usize) -> (Vec<f64>, Vec<Vec<f64>>, u64) {
    let k = diag.len();
    debug_assert_eq!(off.len() + 1, k);
    let count = count.min(k);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < k { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pivot_floor = f64::EPSILON * scale * 1e-3;
    let mut flops = 0u64;

    let mut values = Vec::with_capacity(count);
    for idx in 0..count {
        let (mut a, mut b) = (lo, hi);
        if let Some(&prev) = values.last() {
            a = a.max(prev);
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= 2.0 * f64::EPSILON * scale {
                break;
            }
            flops += 3 * k as u64;
            if sturm_count(diag, off, mid, pivot_floor) > idx {
                b = mid;
            } else {
                a = mid;
            }
        }
        values.push(0.5 * (a + b));
    }

    let cluster_gap = 1e-3 * scale;
    let mut rng = XorShift64Star::new(0x5EED_7121);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (idx, &lambda) in values.iter().enumerate() {
        let mut x: Vec<f64> = (0..k).map(|_| 0.5 + rng.next_f64()).collect();
        normalize(&mut x);
        // earlier vectors in the same cluster; shifting by each distinct lambda
        // alone cannot separate repeated eigenvalues
        let cluster: Vec<usize> = (0..idx).filter(|&p| (values[p] - lambda).abs() <= cluster_gap).collect();
        for _ in 0..INVERSE_ITERATIONS {
            shifted_solve(diag, off, lambda, &mut x, pivot_floor);
            flops += 8 * k as u64;
            for &p in &cluster {
                let d: f64 = x.iter().zip(&vectors[p]).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(&vectors[p]).for_each(|(a, b)| *a -= d * b);
                flops += 4 * k as u64;
            }
            if normalize(&mut x) == 0.0 {
                x = (0..k).map(|_| 0.5 + rng.next_f64()).collect();
                normalize(&mut x);
            }
        }
        vectors.push(x);
    }
    (values, vectors, flops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::dense_eig_oracle;

    fn dense(diag: &[f64], off: &[f64]) -> Vec<f64> {
        let k = diag.len();
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            a[i * k + i] = diag[i];
            if i + 1 < k {
                a[i * k + i + 1] = off[i];
                a[(i + 1) * k + i] = off[i];
            }
        }
        a
    }

    fn check(diag: &[f64], off: &[f64], count: usize) {
        let k = diag.len();
        let (vals, vecs, _) = smallest_eigenpairs(diag, off, count);
        let oracle = dense_eig_oracle(&dense(diag, off), k).unwrap();
        let a = dense(diag, off);
        for (j, (&v, x)) in vals.iter().zip(&vecs).enumerate() {
            assert!((v - oracle.values[j]).abs() < 1e-12, "value {j}: {v} vs {}", oracle.values[j]);
            for i in 0..k {
                let ax: f64 = (0..k).map(|c| a[i * k + c] * x[c]).sum();
                assert!((ax - v * x[i]).abs() < 1e-10, "residual row {i} of pair {j}");
            }
        }
        for p in 0..vecs.len() {
            for q in 0..p {
                let d: f64 = vecs[p].iter().zip(&vecs[q]).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn random_tridiagonal() {
        let mut rng = XorShift64Star::new(3);
        let diag: Vec<f64> = (0..30).map(|_| rng.symmetric(1.0)).collect();
        let off: Vec<f64> = (0..29).map(|_| rng.symmetric(1.0)).collect();
        check(&diag, &off, 6);
    }

    #[test]
    fn split_blocks_with_repeated_eigenvalues() {
        // two identical decoupled blocks: every eigenvalue doubled
        let diag = [2.0, 1.0, 3.0, 2.0, 1.0, 3.0];
        let off = [0.5, -0.25, 0.0, 0.5, -0.25];
        check(&diag, &off, 6);
    }

    #[test]
    fn single_entry() {
        let (v, x, _) = smallest_eigenpairs(&[0.7], &[], 1);
        assert_eq!(v, vec![0.7]);
        assert_eq!(x, vec![vec![1.0]]);
    }
}
