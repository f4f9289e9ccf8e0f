//! Traversal construction cost across token counts.
//!
//!     cargo run --release --example bench

use spectral_vmamba::cli::{bench_point, BENCH_SIDES};
use spectral_vmamba::config::ModelConfig;
use spectral_vmamba::ssm::ModelWeights;

fn main() -> spectral_vmamba::Result<()> {
    let cfg = ModelConfig::default();
    let w = ModelWeights::seeded(&cfg, 0)?;
    println!("{:>6} {:>10} {:>12} {:>14} {:>8}", "n", "ms", "sparse B", "flops", "nnz/n");
    let mut last: Option<usize> = None;
    for side in BENCH_SIDES {
        let p = bench_point(&cfg, &w, side, 0)?;
        let ratio = last.map(|b| format!(" x{:.2}", p.sparse_bytes as f64 / b as f64)).unwrap_or_default();
        println!(
            "{:>6} {:>10.3} {:>12}{ratio} {:>14} {:>8.2}",
            p.n,
            p.seconds * 1e3,
            p.sparse_bytes,
            p.traversal_flops(),
            p.adjacency_nnz as f64 / p.n as f64
        );
        last = Some(p.sparse_bytes);
    }
    Ok(())
}
