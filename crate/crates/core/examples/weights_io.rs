//! Generate seeded weights, save them as SVW1 and load them back.
//!
//!     cargo run --example weights_io -- [path.svw1] [config]

use spectral_vmamba::config::ModelConfig;
use spectral_vmamba::ssm::{read_svw1, ModelWeights};

fn main() -> spectral_vmamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| format!("{}/tiny.svw1", std::env::temp_dir().display()));
    let cfg = match args.next() {
        Some(c) => ModelConfig::parse(&std::fs::read_to_string(c)?)?,
        None => ModelConfig::default(),
    };
    let w = ModelWeights::seeded(&cfg, cfg.weights_seed)?;
    let bytes = w.save(&cfg)?;
    std::fs::write(&path, &bytes)?;
    let tensors = read_svw1(&std::fs::read(&path)?)?;
    let params: usize = tensors.iter().map(|t| t.data.len()).sum();
    println!("{path}: {} tensors, {params} parameters, {} bytes", tensors.len(), bytes.len());
    for t in tensors.iter().take(3).chain(tensors.iter().rev().take(2)) {
        println!("  {} {:?}", t.name, t.dims);
    }
    assert_eq!(ModelWeights::load(&cfg, &bytes)?, w);
    println!("reloaded weights are identical");
    Ok(())
}
