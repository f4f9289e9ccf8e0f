//! Spectral orders on a two-cluster image versus raster and random orders.
//!
//!     cargo run --example traversal -- [out_prefix]

use spectral_vmamba::cli::{cmd_traverse, cluster_crossings, ImageInputs};
use spectral_vmamba::config::ModelConfig;

fn main() -> spectral_vmamba::Result<()> {
    let cfg = ModelConfig { m: 2, ..ModelConfig::default() };
    for seed in 0..3 {
        let (spectral, raster, random) = cluster_crossings(&cfg, 14, seed)?;
        println!("seed {seed}: boundary crossings spectral={spectral:?} raster={raster} random={random}");
    }
    let prefix = std::env::args().nth(1).unwrap_or_else(|| format!("{}/two_cluster", std::env::temp_dir().display()));
    let report = cmd_traverse(&ImageInputs::new(cfg), prefix.as_ref())?;
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
    Ok(())
}
