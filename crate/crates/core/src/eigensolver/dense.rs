//! Cyclic Jacobi on dense symmetric matrices. Used as the reference oracle and
//! as the small-matrix path of the sparse solver.

use crate::error::{Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Full ascending spectrum with orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct DenseEig {
    pub n: usize,
    pub values: Vec<f64>,
    /// Eigenvector `k` occupies `vectors[k * n..(k + 1) * n]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
    pub rotations: usize,
}

impl DenseEig {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Diagonalizes the row-major symmetric `n x n` matrix `a`.
pub fn dense_eig_oracle(a: &[f64], n: usize) -> Result<DenseEig> {
    if a.len() != n * n {
        return Err(Error::shape(format!("{} entries for a {n}x{n} matrix", a.len())));
    }
    for i in 0..n {
        for j in i + 1..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 {
                return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut m = a.to_vec();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }
    // v[k * n + i]: component i of column k
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let mut sweeps = 0;
    let mut rotations = 0;
    loop {
        let off = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].abs())
            .fold(0.0, f64::max);
        if off < OFF_DIAGONAL_TOL {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence { iterations: sweeps, residuals: vec![off] });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (vp, vq) = (v[p * n + k], v[q * n + k]);
                    v[p * n + k] = c * vp - s * vq;
                    v[q * n + k] = s * vp + c * vq;
                }
                rotations += 1;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[a * n + a].total_cmp(&m[b * n + b]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        vectors.extend_from_slice(&v[k * n..(k + 1) * n]);
    }
    Ok(DenseEig { n, values, vectors, sweeps, rotations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn assert_orthonormal(e: &DenseEig) {
        for a in 0..e.n {
            for b in 0..e.n {
                let d: f64 = e.vector(a).iter().zip(e.vector(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10, "<u{a},u{b}> = {d}");
            }
        }
    }

    #[test]
    fn two_node_laplacian() {
        let e = dense_eig_oracle(&[1.0, -1.0, -1.0, 1.0], 2).unwrap();
        assert!(e.values[0].abs() < 1e-15 && (e.values[1] - 2.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vector(0)[0].abs() - r).abs() < 1e-12);
        assert!((e.vector(0)[0] - e.vector(0)[1]).abs() < 1e-12);
        assert!((e.vector(1)[0] + e.vector(1)[1]).abs() < 1e-12);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let e = dense_eig_oracle(&a, n).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
        assert_orthonormal(&e);
    }

    #[test]
    fn path_three_laplacian() {
        let s = -1.0 / 2f64.sqrt();
        let a = [1.0, s, 0.0, s, 1.0, s, 0.0, s, 1.0];
        let e = dense_eig_oracle(&a, 3).unwrap();
        for (got, want) in e.values.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // kernel is proportional to (1, sqrt 2, 1)
        let k = [0.5, 0.5 * 2f64.sqrt(), 0.5];
        let cos: f64 = e.vector(0).iter().zip(k).map(|(x, y)| x * y).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        assert_orthonormal(&e);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        assert!(matches!(dense_eig_oracle(&[1.0, 2.0, 0.0, 1.0], 2), Err(Error::Argument(_))));
    }

    #[test]
    fn random_matrix_reconstructs() {
        let n = 12;
        let mut rng = XorShift64Star::new(5);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.symmetric(1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let e = dense_eig_oracle(&a, n).unwrap();
        assert_orthonormal(&e);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..n {
            let u = e.vector(k);
            for i in 0..n {
                let au: f64 = (0..n).map(|j| a[i * n + j] * u[j]).sum();
                assert!((au - e.values[k] * u[i]).abs() < 1e-10);
            }
        }
    }
}
