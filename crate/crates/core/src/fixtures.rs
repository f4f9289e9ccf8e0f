//! Named graph fixtures for eigensolver checks and the `eig` command.

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::spectral_graph::{normalized_laplacian, GraphConfig, NodeFeatures, PatchGraph, SparseSymMatrix};

/// Normalized Laplacian of the unit-weight path on `n` nodes.
pub fn path_laplacian(n: usize) -> Result<SparseSymMatrix> {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    normalized_laplacian(&SparseSymMatrix::from_upper_triplets(n, &edges)?)
}

/// Normalized Laplacian of the 4-connected `rows x cols` grid.
pub fn grid_laplacian(rows: usize, cols: usize) -> Result<SparseSymMatrix> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1, 1.0));
            }
            if r + 1 < rows {
                edges.push((i, i + cols, 1.0));
            }
        }
    }
    normalized_laplacian(&SparseSymMatrix::from_upper_triplets(rows * cols, &edges)?)
}

/// Two disjoint paths of `a` and `b` nodes; the kernel is two-dimensional.
pub fn two_component_laplacian(a: usize, b: usize) -> Result<SparseSymMatrix> {
    let mut edges: Vec<_> = (1..a).map(|i| (i - 1, i, 1.0)).collect();
    edges.extend((1..b).map(|i| (a + i - 1, a + i, 1.0)));
    normalized_laplacian(&SparseSymMatrix::from_upper_triplets(a + b, &edges)?)
}

/// Diagonal matrix with entries `0, 1/n, 2/n, ...`; not a Laplacian.
pub fn diagonal(n: usize) -> Result<SparseSymMatrix> {
    let entries: Vec<_> = (0..n).map(|i| (i, i, i as f64 / n as f64)).collect();
    // zero entries are not stored; the matrix is still diagonal
    SparseSymMatrix::from_upper_triplets(n, &entries)
}

/// Uniform random features in the unit cube.
pub fn random_features(n: usize, dim: usize, seed: u64) -> NodeFeatures {
    let mut rng = XorShift64Star::new(seed);
    NodeFeatures::new(dim, (0..n * dim).map(|_| rng.next_f64()).collect()).expect("n * dim values")
}

/// Features drawn around two well-separated centers; node `i` belongs to
/// cluster `i % 2`.
pub fn two_cluster_features(n: usize, dim: usize, spread: f64, seed: u64) -> NodeFeatures {
    let mut rng = XorShift64Star::new(seed);
    let data = (0..n)
        .flat_map(|i| {
            let center = if i % 2 == 0 { 0.0 } else { 1.0 };
            (0..dim).map(|_| center + rng.symmetric(spread)).collect::<Vec<_>>()
        })
        .collect();
    NodeFeatures::new(dim, data).expect("n * dim values")
}

pub fn knn_laplacian(features: &NodeFeatures, k: usize) -> Result<SparseSymMatrix> {
    Ok(PatchGraph::build(features, &GraphConfig { k, sigma_floor: 1e-12 })?.laplacian)
}

/// Resolves `p3`, `path:<n>`, `grid:<r>x<c>`, `diag:<n>`, `two-component:<a>,<b>`,
/// `knn:<n>,<k>,<seed>` and `two-cluster:<n>,<k>,<seed>`.
pub fn by_name(name: &str) -> Result<SparseSymMatrix> {
    let (kind, args) = name.split_once(':').unwrap_or((name, ""));
    let nums = |sep: char| -> Result<Vec<u64>> {
        args.split(sep)
            .map(|s| s.trim().parse::<u64>().map_err(|_| Error::arg(format!("bad fixture argument in {name:?}"))))
            .collect()
    };
    let arity = |v: &[u64], k: usize| -> Result<()> {
        if v.len() == k {
            Ok(())
        } else {
            Err(Error::arg(format!("fixture {name:?} needs {k} arguments")))
        }
    };
    match kind {
        "p3" => path_laplacian(3),
        "path" => {
            let v = nums(',')?;
            arity(&v, 1)?;
            path_laplacian(v[0] as usize)
        }
        "grid" => {
            let v = nums('x')?;
            arity(&v, 2)?;
            grid_laplacian(v[0] as usize, v[1] as usize)
        }
        "diag" => {
            let v = nums(',')?;
            arity(&v, 1)?;
            diagonal(v[0] as usize)
        }
        "two-component" => {
            let v = nums(',')?;
            arity(&v, 2)?;
            two_component_laplacian(v[0] as usize, v[1] as usize)
        }
        "knn" => {
            let v = nums(',')?;
            arity(&v, 3)?;
            knn_laplacian(&random_features(v[0] as usize, 4, v[2]), v[1] as usize)
        }
        "two-cluster" => {
            let v = nums(',')?;
            arity(&v, 3)?;
            knn_laplacian(&two_cluster_features(v[0] as usize, 4, 0.2, v[2]), v[1] as usize)
        }
        _ => Err(Error::arg(format!("unknown fixture {name:?}"))),
    }
}
