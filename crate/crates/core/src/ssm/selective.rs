//! Selective scan: `delta`, `B` and `C` depend on the current token.

use crate::error::{Error, Result};
use crate::flops::{self, Stage};
use crate::traversal::TokenSequence;

use super::scan::ZohMode;

/// Weights of one selective-scan unit over `C` channels with `N` states.
///
/// Matrices are stored input-major: `W` of shape `in x out` maps `x` to
/// `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct S6Weights {
    pub channels: usize,
    pub state: usize,
    /// `C x C`
    pub w_in: Vec<f32>,
    pub b_in: Vec<f32>,
    /// `C x C`, softplus-activated
    pub w_delta: Vec<f32>,
    pub b_delta: Vec<f32>,
    /// `C x N`
    pub w_b: Vec<f32>,
    pub b_b: Vec<f32>,
    /// `C x N`
    pub w_c: Vec<f32>,
    pub b_c: Vec<f32>,
    /// `A = -exp(a_log)`, shared by all channels
    pub a_log: Vec<f32>,
    /// `C x C`
    pub w_out: Vec<f32>,
    pub b_out: Vec<f32>,
}

impl S6Weights {
    pub fn zeros(channels: usize, state: usize) -> Self {
        let (c, n) = (channels, state);
        Self {
            channels,
            state,
            w_in: vec![0.0; c * c],
            b_in: vec![0.0; c],
            w_delta: vec![0.0; c * c],
            b_delta: vec![0.0; c],
            w_b: vec![0.0; c * n],
            b_b: vec![0.0; n],
            w_c: vec![0.0; c * n],
            b_c: vec![0.0; n],
            a_log: vec![0.0; n],
            w_out: vec![0.0; c * c],
            b_out: vec![0.0; c],
        }
    }

    /// `(name, rows, cols, values)` for every tensor, in storage order.
    pub fn tensors(&self) -> [(&'static str, usize, usize, &Vec<f32>); 11] {
        let (c, n) = (self.channels, self.state);
        [
            ("w_in", c, c, &self.w_in),
            ("b_in", 1, c, &self.b_in),
            ("w_delta", c, c, &self.w_delta),
            ("b_delta", 1, c, &self.b_delta),
            ("w_b", c, n, &self.w_b),
            ("b_b", 1, n, &self.b_b),
            ("w_c", c, n, &self.w_c),
            ("b_c", 1, n, &self.b_c),
            ("a_log", 1, n, &self.a_log),
            ("w_out", c, c, &self.w_out),
            ("b_out", 1, c, &self.b_out),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f32>; 11] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_delta,
            &mut self.b_delta,
            &mut self.w_b,
            &mut self.b_b,
            &mut self.w_c,
            &mut self.b_c,
            &mut self.a_log,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rows, cols, v) in self.tensors() {
            if v.len() != rows * cols {
                return Err(Error::shape(format!("{name} has {} values, expected {rows}x{cols}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::arg(format!("{name} has non-finite values")));
            }
        }
        Ok(())
    }

    /// Rough operation count for a sequence of `len` tokens.
    pub fn flops(&self, len: usize) -> u64 {
        let (c, n) = (self.channels as u64, self.state as u64);
        len as u64 * (6 * c * c + 4 * c * n + 3 * c + 9 * c * n)
    }
}

fn affine(x: &[f64], w: &[f32], b: &[f32], out: &mut [f64]) {
    let cols = out.len();
    out.iter_mut().zip(b).for_each(|(o, &b)| *o = b as f64);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        out.iter_mut().zip(row).for_each(|(o, &w)| *o += xi * w as f64);
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Runs the scan without touching the flop counters.
pub(crate) fn selective_scan_uncounted(w: &S6Weights, x: &TokenSequence, zoh: ZohMode) -> Result<TokenSequence> {
    let (c, n) = (w.channels, w.state);
    if x.channels != c {
        return Err(Error::shape(format!("sequence has {} channels, scan expects {c}", x.channels)));
    }
    let a: Vec<f64> = w.a_log.iter().map(|&v| -(v as f64).exp()).collect();
    let mut h = vec![0.0f64; c * n];
    let mut u = vec![0.0; c];
    let mut delta = vec![0.0; c];
    let mut bt = vec![0.0; n];
    let mut ct = vec![0.0; n];
    let mut y = vec![0.0; c];
    let mut out = Vec::with_capacity(x.data.len());
    let mut o = vec![0.0; c];
    for t in 0..x.len() {
        affine(x.token(t), &w.w_in, &w.b_in, &mut u);
        affine(&u, &w.w_delta, &w.b_delta, &mut delta);
        delta.iter_mut().for_each(|d| *d = softplus(*d));
        affine(&u, &w.w_b, &w.b_b, &mut bt);
        affine(&u, &w.w_c, &w.b_c, &mut ct);
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numeric { step: t, what: "delta" });
        }
        for ch in 0..c {
            let hs = &mut h[ch * n..(ch + 1) * n];
            let mut acc = 0.0;
            for i in 0..n {
                let (a_bar, gain) = zoh.coefficients(delta[ch], a[i]);
                hs[i] = a_bar * hs[i] + gain * bt[i] * u[ch];
                acc += ct[i] * hs[i];
            }
            y[ch] = acc;
        }
        affine(&y, &w.w_out, &w.b_out, &mut o);
        if o.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: t, what: "scan output" });
        }
        out.extend_from_slice(&o);
    }
    Ok(TokenSequence { channels: c, data: out })
}

/// Per token `t`: `u = x_t W_in + b_in`, `delta = softplus(u W_delta + b_delta)`,
/// `B = u W_B + b_B`, `C = u W_C + b_C`; per channel the diagonal recurrence
/// `h = exp(delta A) h + delta B u`, readout `C . h`, then the output projection.
pub fn selective_scan(w: &S6Weights, x: &TokenSequence, zoh: ZohMode) -> Result<TokenSequence> {
    let y = selective_scan_uncounted(w, x, zoh)?;
    flops::add(Stage::Scan, w.flops(x.len()));
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use crate::ssm::scan::{discretize_zoh, recurrent_scan, SsmParams};

    fn random_weights(c: usize, n: usize, seed: u64) -> S6Weights {
        let mut rng = XorShift64Star::new(seed);
        let mut w = S6Weights::zeros(c, n);
        for t in w.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.symmetric(0.5) as f32);
        }
        w
    }

    fn sequence(c: usize, len: usize, seed: u64) -> TokenSequence {
        let mut rng = XorShift64Star::new(seed);
        TokenSequence::new(c, (0..c * len).map(|_| rng.symmetric(1.0)).collect()).unwrap()
    }

    fn identity(c: usize) -> Vec<f32> {
        (0..c * c).map(|k| if k / c == k % c { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_readout_gives_zero() {
        let mut w = random_weights(3, 4, 1);
        w.w_c.iter_mut().for_each(|v| *v = 0.0);
        w.b_c.iter_mut().for_each(|v| *v = 0.0);
        w.b_out.iter_mut().for_each(|v| *v = 0.0);
        let y = selective_scan(&w, &sequence(3, 10, 2), ZohMode::Approx).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_gives_zero() {
        let mut w = random_weights(3, 4, 5);
        for b in [&mut w.b_in, &mut w.b_b, &mut w.b_c, &mut w.b_out] {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = TokenSequence::new(3, vec![0.0; 30]).unwrap();
        let y = selective_scan(&w, &x, ZohMode::Approx).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frozen_parameters_match_recurrent_scan() {
        let (c, n) = (3, 4);
        for zoh in [ZohMode::Approx, ZohMode::Exact] {
            let mut w = random_weights(c, n, 9);
            w.w_in = identity(c);
            w.b_in = vec![0.0; c];
            w.w_out = identity(c);
            w.b_out = vec![0.0; c];
            for m in [&mut w.w_delta, &mut w.w_b, &mut w.w_c] {
                m.iter_mut().for_each(|v| *v = 0.0);
            }
            w.b_delta = vec![-1.5, -2.0, 0.3];
            let x = sequence(c, 40, 4);
            let y = selective_scan(&w, &x, zoh).unwrap();
            for ch in 0..c {
                let params = SsmParams {
                    a: w.a_log.iter().map(|&v| -(v as f64).exp()).collect(),
                    b: w.b_b.iter().map(|&v| v as f64).collect(),
                    c: w.b_c.iter().map(|&v| v as f64).collect(),
                    delta: softplus(w.b_delta[ch] as f64),
                };
                let d = discretize_zoh(&params, zoh).unwrap();
                let xs: Vec<f64> = (0..x.len()).map(|t| x.token(t)[ch]).collect();
                let want = recurrent_scan(&d, &params.c, &xs).unwrap();
                for t in 0..x.len() {
                    assert!((y.token(t)[ch] - want[t]).abs() <= 1e-12, "channel {ch} step {t}");
                }
            }
        }
    }

    #[test]
    fn overflow_reports_step() {
        let mut w = random_weights(2, 2, 3);
        w.w_in = identity(2);
        w.w_delta = vec![1e30, 0.0, 0.0, 0.0];
        w.b_delta = vec![0.0; 2];
        let mut x = sequence(2, 6, 1);
        x.data[8] = f64::MAX;
        match selective_scan(&w, &x, ZohMode::Approx) {
            Err(Error::Numeric { step, .. }) => assert_eq!(step, 4),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn channel_mismatch() {
        let w = random_weights(3, 2, 0);
        assert!(selective_scan(&w, &sequence(2, 4, 0), ZohMode::Approx).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(100.0), 100.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0);
    }
}
