//! Linear time-invariant scans with diagonal state matrices.

use crate::error::{Error, Result};
use crate::flops::{self, Stage};

/// Continuous parameters `h' = A h + B x`, `y = C h` with diagonal `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    /// Diagonal of `A`; stable when every entry is negative.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub delta: f64,
}

impl SsmParams {
    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn is_stable(&self) -> bool {
        self.a.iter().all(|&a| a < 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedParams {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// How `B` is discretized; `A` always uses `exp(delta A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZohMode {
    /// `B_bar = delta B`.
    #[default]
    Approx,
    /// `B_bar = (delta A)^-1 (exp(delta A) - 1) delta B`.
    Exact,
}

impl ZohMode {
    pub fn name(self) -> &'static str {
        match self {
            ZohMode::Approx => "approx",
            ZohMode::Exact => "exact",
        }
    }

    /// `(A_bar, B_bar / b)` for one diagonal entry.
    #[inline]
    pub(crate) fn coefficients(self, delta: f64, a: f64) -> (f64, f64) {
        let da = delta * a;
        let a_bar = da.exp();
        let gain = match self {
            ZohMode::Approx => delta,
            ZohMode::Exact if da == 0.0 => delta,
            ZohMode::Exact => da.exp_m1() / a,
        };
        (a_bar, gain)
    }
}

impl std::str::FromStr for ZohMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(ZohMode::Approx),
            "exact" => Ok(ZohMode::Exact),
            other => Err(Error::arg(format!("unknown zoh mode {other:?} (approx|exact)"))),
        }
    }
}

pub fn discretize_zoh(p: &SsmParams, mode: ZohMode) -> Result<DiscretizedParams> {
    if !(p.delta > 0.0) || !p.delta.is_finite() {
        return Err(Error::arg(format!("delta must be positive, got {}", p.delta)));
    }
    if p.b.len() != p.a.len() {
        return Err(Error::shape(format!("A has {} entries, B has {}", p.a.len(), p.b.len())));
    }
    let (a_bar, b_bar) = p
        .a
        .iter()
        .zip(&p.b)
        .map(|(&a, &b)| {
            let (a_bar, gain) = mode.coefficients(p.delta, a);
            (a_bar, gain * b)
        })
        .unzip();
    Ok(DiscretizedParams { a_bar, b_bar })
}

fn check_readout(d: &DiscretizedParams, c: &[f64]) -> Result<()> {
    if c.len() != d.a_bar.len() || d.b_bar.len() != d.a_bar.len() {
        return Err(Error::shape(format!(
            "state sizes disagree: A_bar {}, B_bar {}, C {}",
            d.a_bar.len(),
            d.b_bar.len(),
            c.len()
        )));
    }
    Ok(())
}

/// `h(t) = A_bar h(t-1) + B_bar x(t)`, `y(t) = C h(t)`, from `h = 0`.
pub fn recurrent_scan(d: &DiscretizedParams, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_readout(d, c)?;
    let n = c.len();
    let mut h = vec![0.0; n];
    let y = x
        .iter()
        .map(|&xt| {
            for i in 0..n {
                h[i] = d.a_bar[i] * h[i] + d.b_bar[i] * xt;
            }
            h.iter().zip(c).map(|(h, c)| h * c).sum()
        })
        .collect();
    flops::add(Stage::Scan, (x.len() * 5 * n) as u64);
    Ok(y)
}

/// `K[s] = C A_bar^s B_bar` for `s = 0..len`.
pub fn conv_kernel(d: &DiscretizedParams, c: &[f64], len: usize) -> Result<Vec<f64>> {
    check_readout(d, c)?;
    let mut power: Vec<f64> = d.b_bar.clone();
    let mut kernel = Vec::with_capacity(len);
    for _ in 0..len {
        kernel.push(power.iter().zip(c).map(|(p, c)| p * c).sum());
        power.iter_mut().zip(&d.a_bar).for_each(|(p, a)| *p *= a);
    }
    flops::add(Stage::Scan, (len * 3 * c.len()) as u64);
    Ok(kernel)
}

/// Causal convolution `y(t) = sum_{s <= t} K[s] x(t - s)`.
pub fn conv_scan(kernel: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if kernel.len() < x.len() {
        return Err(Error::shape(format!("kernel of {} taps for {} steps", kernel.len(), x.len())));
    }
    let y = (0..x.len()).map(|t| (0..=t).map(|s| kernel[s] * x[t - s]).sum()).collect();
    flops::add(Stage::Scan, (x.len() * (x.len() + 1)) as u64);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use proptest::prelude::*;

    fn scalar(a_bar: f64, b_bar: f64) -> DiscretizedParams {
        DiscretizedParams { a_bar: vec![a_bar], b_bar: vec![b_bar] }
    }

    #[test]
    fn zero_a_keeps_state() {
        let d = discretize_zoh(&SsmParams { a: vec![0.0], b: vec![1.0], c: vec![1.0], delta: 0.1 }, ZohMode::Approx)
            .unwrap();
        assert_eq!(d.a_bar, vec![1.0]);
        assert_eq!(d.b_bar, vec![0.1]);
    }

    #[test]
    fn unit_decay() {
        let d = discretize_zoh(&SsmParams { a: vec![-1.0], b: vec![1.0], c: vec![1.0], delta: 0.1 }, ZohMode::Approx)
            .unwrap();
        assert!((d.a_bar[0] - 0.904_837_418_035_959_6).abs() < 1e-15);
        assert_eq!(d.b_bar, vec![0.1]);
        let e = discretize_zoh(&SsmParams { a: vec![-1.0], b: vec![1.0], c: vec![1.0], delta: 0.1 }, ZohMode::Exact)
            .unwrap();
        // (1 - e^-0.1) / 1
        assert!((e.b_bar[0] - 0.095_162_581_964_040_43).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_delta_is_rejected() {
        for delta in [0.0, -0.5, f64::NAN] {
            let p = SsmParams { a: vec![-1.0], b: vec![1.0], c: vec![1.0], delta };
            assert!(matches!(discretize_zoh(&p, ZohMode::Approx), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn hand_unrolled_scan() {
        let d = scalar(0.5, 1.0);
        assert_eq!(recurrent_scan(&d, &[2.0], &[1.0, 0.0, 0.0]).unwrap(), vec![2.0, 1.0, 0.5]);
        assert_eq!(conv_kernel(&d, &[2.0], 3).unwrap(), vec![2.0, 1.0, 0.5]);
        assert_eq!(conv_kernel(&d, &[2.0], 1).unwrap(), vec![2.0]);
    }

    #[test]
    fn memoryless_and_zero_input() {
        let d = scalar(0.0, 0.3);
        let y = recurrent_scan(&d, &[2.0], &[1.0, -2.0, 4.0]).unwrap();
        for (y, x) in y.iter().zip([1.0, -2.0, 4.0]) {
            assert!((y - 0.6 * x).abs() < 1e-15);
        }
        assert_eq!(recurrent_scan(&scalar(0.9, 1.0), &[1.0], &[0.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(recurrent_scan(&d, &[2.0], &[]).unwrap().is_empty());
    }

    fn stable_params() -> impl Strategy<Value = (SsmParams, u64)> {
        (1usize..9, 1e-3f64..1.0, any::<u64>()).prop_map(|(n, delta, seed)| {
            let mut rng = XorShift64Star::new(seed);
            let a = (0..n).map(|_| -(0.01 + 4.0 * rng.next_f64())).collect();
            let b = (0..n).map(|_| rng.symmetric(1.0)).collect();
            let c = (0..n).map(|_| rng.symmetric(1.0)).collect();
            (SsmParams { a, b, c, delta }, seed)
        })
    }

    proptest! {
        #[test]
        fn recurrent_equals_convolution((p, seed) in stable_params(), len in 1usize..=64, exact in any::<bool>()) {
            let mode = if exact { ZohMode::Exact } else { ZohMode::Approx };
            let d = discretize_zoh(&p, mode).unwrap();
            let mut rng = XorShift64Star::new(seed ^ 0xABC);
            let x: Vec<f64> = (0..len).map(|_| rng.symmetric(1.0)).collect();
            let r = recurrent_scan(&d, &p.c, &x).unwrap();
            let k = conv_kernel(&d, &p.c, len).unwrap();
            let c = conv_scan(&k, &x).unwrap();
            for (a, b) in r.iter().zip(&c) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn doubling_delta_squares_decay((p, _) in stable_params()) {
            let d1 = discretize_zoh(&p, ZohMode::Approx).unwrap();
            let d2 = discretize_zoh(&SsmParams { delta: 2.0 * p.delta, ..p.clone() }, ZohMode::Approx).unwrap();
            for (a1, a2) in d1.a_bar.iter().zip(&d2.a_bar) {
                prop_assert!(*a1 > 0.0 && *a1 < 1.0);
                prop_assert!((a1 * a1 - a2).abs() <= 1e-12);
            }
        }

        #[test]
        fn scan_is_linear((p, seed) in stable_params(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let d = discretize_zoh(&p, ZohMode::Approx).unwrap();
            let mut rng = XorShift64Star::new(seed);
            let x1: Vec<f64> = (0..32).map(|_| rng.symmetric(1.0)).collect();
            let x2: Vec<f64> = (0..32).map(|_| rng.symmetric(1.0)).collect();
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| alpha * a + beta * b).collect();
            let y1 = recurrent_scan(&d, &p.c, &x1).unwrap();
            let y2 = recurrent_scan(&d, &p.c, &x2).unwrap();
            let y = recurrent_scan(&d, &p.c, &mix).unwrap();
            for t in 0..32 {
                prop_assert!((y[t] - alpha * y1[t] - beta * y2[t]).abs() <= 1e-10);
            }
        }

        #[test]
        fn state_stays_bounded((p, seed) in stable_params()) {
            let d = discretize_zoh(&p, ZohMode::Approx).unwrap();
            let mut rng = XorShift64Star::new(seed);
            let x: Vec<f64> = (0..200).map(|_| rng.symmetric(1.0)).collect();
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bnorm = d.b_bar.iter().map(|b| b * b).sum::<f64>().sqrt();
            let amax = d.a_bar.iter().fold(0.0f64, |m, &a| m.max(a));
            let bound = bnorm * xmax / (1.0 - amax);
            // track the state directly through unit readouts
            for i in 0..p.state_dim() {
                let mut e = vec![0.0; p.state_dim()];
                e[i] = 1.0;
                let h = recurrent_scan(&d, &e, &x).unwrap();
                prop_assert!(h.iter().all(|v| v.abs() <= bound * (1.0 + 1e-12)));
            }
        }
    }
}
