//! Class scores of the tiny network on an image and its quarter turns.
//!
//!     cargo run --release --example network_forward -- [image.ppm]

use spectral_vmamba::config::ModelConfig;
use spectral_vmamba::ssm::{network_forward_traced, ModelWeights};
use spectral_vmamba::tensor_io::{read_ppm, rotate_quarter, synth_noise, QuarterTurn};

fn main() -> spectral_vmamba::Result<()> {
    let cfg = ModelConfig::default();
    let w = ModelWeights::seeded(&cfg, cfg.weights_seed)?;
    let img = match std::env::args().nth(1) {
        Some(p) => read_ppm(&std::fs::read(p)?)?,
        None => synth_noise(cfg.image_size, cfg.image_size, 3, 11)?,
    };
    let base = network_forward_traced(&img, &w, &cfg)?;
    println!("stage grids: {:?}", base.stage_shapes);
    println!("eigenvalues: {:?}", base.traversal.basis.values());
    println!("scores: {:?}", base.scores.iter().map(|v| format!("{v:+.5}")).collect::<Vec<_>>());
    for q in (1..4).map(QuarterTurn::new) {
        let s = network_forward_traced(&rotate_quarter(&img, q), &w, &cfg)?.scores;
        let gap = s.iter().zip(&base.scores).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{q}: max score difference {gap:.1e}");
    }
    Ok(())
}
