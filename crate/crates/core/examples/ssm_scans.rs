//! Recurrent and convolutional forms of a discretized SSM, and a selective scan.
//!
//!     cargo run --example ssm_scans

use spectral_vmamba::rng::XorShift64Star;
use spectral_vmamba::ssm::{
    conv_kernel, conv_scan, discretize_zoh, recurrent_scan, selective_scan, S6Weights, SsmParams, ZohMode,
};
use spectral_vmamba::traversal::TokenSequence;

fn main() -> spectral_vmamba::Result<()> {
    let mut rng = XorShift64Star::new(42);
    let p = SsmParams {
        a: (0..8).map(|i| -((i + 1) as f64)).collect(),
        b: (0..8).map(|_| rng.symmetric(1.0)).collect(),
        c: (0..8).map(|_| rng.symmetric(1.0)).collect(),
        delta: 0.05,
    };
    let x: Vec<f64> = (0..64).map(|_| rng.symmetric(1.0)).collect();
    for mode in [ZohMode::Approx, ZohMode::Exact] {
        let d = discretize_zoh(&p, mode)?;
        let rec = recurrent_scan(&d, &p.c, &x)?;
        let conv = conv_scan(&conv_kernel(&d, &p.c, x.len())?, &x)?;
        let gap = rec.iter().zip(&conv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("zoh={:<6} max |recurrent - convolution| = {gap:.2e}", mode.name());
    }

    let (c, n) = (4, 8);
    let mut w = S6Weights::zeros(c, n);
    w.w_in = (0..c * c).map(|k| if k / c == k % c { 1.0 } else { 0.0 }).collect();
    w.w_out = w.w_in.clone();
    w.w_delta = (0..c * c).map(|_| rng.symmetric(0.5) as f32).collect();
    w.b_delta = vec![-3.0; c];
    w.w_b = (0..c * n).map(|_| rng.symmetric(0.5) as f32).collect();
    w.w_c = (0..c * n).map(|_| rng.symmetric(0.5) as f32).collect();
    w.a_log = (0..n).map(|i| ((i + 1) as f32).ln()).collect();
    let seq = TokenSequence::new(c, (0..16 * c).map(|_| rng.symmetric(1.0)).collect())?;
    let y = selective_scan(&w, &seq, ZohMode::Approx)?;
    for t in [0, 7, 15] {
        println!("token {t:>2}: {:?}", y.token(t).iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>());
    }
    Ok(())
}
