//! Build the k-nearest-neighbor patch graph and its normalized Laplacian.
//!
//!     cargo run --example patch_graph -- [k]

use spectral_vmamba::config::ModelConfig;
use spectral_vmamba::eigensolver::dense_eig_oracle;
use spectral_vmamba::patch_embed::rfn_aggregate;
use spectral_vmamba::spectral_graph::{flatten_features, GraphConfig, PatchGraph};
use spectral_vmamba::ssm::ModelWeights;
use spectral_vmamba::tensor_io::{synth_two_cluster, QuarterTurn};

fn main() -> spectral_vmamba::Result<()> {
    let k = std::env::args().nth(1).map_or(5, |s| s.parse().expect("k"));
    let cfg = ModelConfig::default();
    let w = ModelWeights::seeded(&cfg, 0)?;
    let img = synth_two_cluster(14, 14, 4, 0.5, 3)?;
    let f = rfn_aggregate(&img, &w.stem, &QuarterTurn::ALL, false)?;
    let g = PatchGraph::build(&flatten_features(&f), &GraphConfig { k, ..GraphConfig::default() })?;
    let n = g.laplacian.n();
    println!("n={n} k={k} sigma={:.4}", g.sigma);
    println!("adjacency nnz={} (bound 2kn={})", g.adjacency.nnz(), 2 * k * n);
    println!("sparse bytes: W={} L={}", g.adjacency.heap_bytes(), g.laplacian.heap_bytes());
    let e = dense_eig_oracle(&g.laplacian.to_dense(), n)?;
    println!("spectrum in [{:.3e}, {:.6}]", e.values[0], e.values[n - 1]);
    println!("smallest four: {:?}", &e.values[..4]);
    Ok(())
}
