//! The rotational feature normalizer is rotation-equivariant, a plain stem is not.
//!
//!     cargo run --example rfn

use spectral_vmamba::config::ModelConfig;
use spectral_vmamba::patch_embed::{patchify, rfn_aggregate};
use spectral_vmamba::ssm::ModelWeights;
use spectral_vmamba::tensor_io::{rotate_quarter, synth_noise, QuarterTurn};

fn main() -> spectral_vmamba::Result<()> {
    let cfg = ModelConfig::default();
    let w = ModelWeights::seeded(&cfg, 0)?;
    let img = synth_noise(56, 56, 3, 1)?;
    let base = rfn_aggregate(&img, &w.stem, &QuarterTurn::ALL, false)?;
    let plain = patchify(&img, &w.stem)?;
    for q in (1..4).map(QuarterTurn::new) {
        let rotated = rotate_quarter(&img, q);
        let rfn = rfn_aggregate(&rotated, &w.stem, &QuarterTurn::ALL, true)? == base.rotate(q);
        let stem = patchify(&rotated, &w.stem)? == plain.rotate(q);
        println!("{q}: rfn equivariant={rfn}  plain stem equivariant={stem}");
    }
    Ok(())
}
