//! Linear patch stem and the rotational feature normalizer (RFN).
//!
//! The RFN runs the stem on every requested quarter-turn of the input, rotates
//! each resulting patch grid back to the original frame and keeps the
//! element-wise maximum. Over the full group `{0, 90, 180, 270}` the result is
//! exactly rotation-equivariant: rotating the input rotates the grid of feature
//! vectors and leaves each vector untouched.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flops::{self, Stage};
use crate::tensor_io::{rotate_grid, rotate_quarter, ImageTensor, QuarterTurn};

/// A single linear projection applied to each flattened `p x p x in` patch.
#[derive(Debug, Clone, PartialEq)]
pub struct StemWeights {
    pub patch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(patch * patch * in_channels) x out_channels`, row-major.
    pub projection: Vec<f32>,
    pub bias: Vec<f32>,
}

impl StemWeights {
    pub fn new(
        patch: usize,
        in_channels: usize,
        out_channels: usize,
        projection: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let w = Self { patch, in_channels, out_channels, projection, bias };
        w.validate()?;
        Ok(w)
    }

    pub fn input_dim(&self) -> usize {
        self.patch * self.patch * self.in_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.out_channels == 0 {
            return Err(Error::arg("stem needs patch >= 1 and out_channels >= 1"));
        }
        if self.projection.len() != self.input_dim() * self.out_channels {
            return Err(Error::shape(format!(
                "stem projection has {} entries, expected {}x{}",
                self.projection.len(),
                self.input_dim(),
                self.out_channels
            )));
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::shape(format!(
                "stem bias has {} entries, expected {}",
                self.bias.len(),
                self.out_channels
            )));
        }
        if self.projection.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::arg("stem weights contain non-finite values"));
        }
        Ok(())
    }

    /// Projection that copies the flattened patch: `C = p * p * in`.
    pub fn identity(patch: usize, in_channels: usize) -> Self {
        let d = patch * patch * in_channels;
        let mut projection = vec![0.0; d * d];
        for i in 0..d {
            projection[i * d + i] = 1.0;
        }
        Self { patch, in_channels, out_channels: d, projection, bias: vec![0.0; d] }
    }
}

/// `hp x wp` grid of `channels`-vectors, row-major, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    hp: usize,
    wp: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(hp: usize, wp: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != hp * wp * channels {
            return Err(Error::shape(format!(
                "{hp}x{wp}x{channels} feature map needs {} values, got {}",
                hp * wp * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("feature map contains non-finite values"));
        }
        Ok(Self { hp, wp, channels, data })
    }

    pub fn zeros(hp: usize, wp: usize, channels: usize) -> Self {
        Self { hp, wp, channels, data: vec![0.0; hp * wp * channels] }
    }

    pub fn hp(&self) -> usize {
        self.hp
    }

    pub fn wp(&self) -> usize {
        self.wp
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.hp, self.wp)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tokens(&self) -> usize {
        self.hp * self.wp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Feature vector of node `index = r * wp + c`.
    #[inline]
    pub fn token(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn token_mut(&mut self, index: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.data[index * c..(index + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> &[f64] {
        self.token(r * self.wp + c)
    }

    /// Rotates the patch grid; each feature vector is moved, not remapped.
    pub fn rotate(&self, q: QuarterTurn) -> FeatureMap {
        let (hp, wp) = q.output_shape(self.hp, self.wp);
        FeatureMap {
            hp,
            wp,
            channels: self.channels,
            data: rotate_grid(&self.data, self.hp, self.wp, self.channels, q),
        }
    }
}

pub fn patchify(img: &ImageTensor, w: &StemWeights) -> Result<FeatureMap> {
    let fm = project_patches(img, w)?;
    flops::add(Stage::Stem, stem_flops(w, fm.tokens()));
    Ok(fm)
}

fn stem_flops(w: &StemWeights, tokens: usize) -> u64 {
    (2 * w.input_dim() * w.out_channels * tokens) as u64
}

/// Uncounted stem; flop counters are per thread, so callers charge the work
/// on their own thread.
fn project_patches(img: &ImageTensor, w: &StemWeights) -> Result<FeatureMap> {
    let p = w.patch;
    if img.channels() != w.in_channels {
        return Err(Error::shape(format!(
            "image has {} channels, stem expects {}",
            img.channels(),
            w.in_channels
        )));
    }
    if img.height() % p != 0 || img.width() % p != 0 {
        return Err(Error::shape(format!(
            "patch size {p} does not divide {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let (hp, wp) = (img.height() / p, img.width() / p);
    let (cin, cout) = (w.in_channels, w.out_channels);
    let mut data = Vec::with_capacity(hp * wp * cout);
    let mut flat = vec![0f64; w.input_dim()];
    for pi in 0..hp {
        for pj in 0..wp {
            for di in 0..p {
                for dj in 0..p {
                    let px = img.pixel(pi * p + di, pj * p + dj);
                    for (ch, &v) in px.iter().enumerate() {
                        flat[(di * p + dj) * cin + ch] = v as f64;
                    }
                }
            }
            let start = data.len();
            data.extend(w.bias.iter().map(|&b| b as f64));
            let out = &mut data[start..];
            for (k, &x) in flat.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &w.projection[k * cout..(k + 1) * cout];
                for (o, &wk) in out.iter_mut().zip(row) {
                    *o += x * wk as f64;
                }
            }
        }
    }
    Ok(FeatureMap { hp, wp, channels: cout, data })
}

/// Element-wise max over `turns` of `rotate(patchify(rotate(img, q)), -q)`.
pub fn rfn_aggregate(
    img: &ImageTensor,
    w: &StemWeights,
    turns: &[QuarterTurn],
    parallel: bool,
) -> Result<FeatureMap> {
    let mut turns = turns.to_vec();
    turns.sort_unstable();
    turns.dedup();
    if turns.is_empty() {
        return Err(Error::arg("RFN needs at least one rotation"));
    }
    if turns.iter().any(|q| q.is_odd()) && !img.is_square() {
        return Err(Error::shape(format!(
            "odd quarter-turns need a square image, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let branch = |q: &QuarterTurn| -> Result<FeatureMap> {
        Ok(project_patches(&rotate_quarter(img, *q), w)?.rotate(q.inverse()))
    };
    let branches: Vec<FeatureMap> = if parallel {
        turns.par_iter().map(branch).collect::<Result<_>>()?
    } else {
        turns.iter().map(branch).collect::<Result<_>>()?
    };
    flops::add(Stage::Stem, turns.len() as u64 * stem_flops(w, branches[0].tokens()));
    let mut iter = branches.into_iter();
    let mut acc = iter.next().expect("nonempty turns");
    for fm in iter {
        for (a, b) in acc.data.iter_mut().zip(&fm.data) {
            *a = a.max(*b);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use crate::tensor_io::synth_noise;
    use proptest::prelude::*;

    fn seeded_stem(p: usize, cin: usize, cout: usize, seed: u64) -> StemWeights {
        let mut rng = XorShift64Star::new(seed);
        let d = p * p * cin;
        let projection = (0..d * cout).map(|_| rng.symmetric(1.0) as f32).collect();
        let bias = (0..cout).map(|_| rng.symmetric(0.1) as f32).collect();
        StemWeights::new(p, cin, cout, projection, bias).unwrap()
    }

    #[test]
    fn identity_stem_returns_raw_patches() {
        let img = synth_noise(4, 6, 3, 11).unwrap();
        let fm = patchify(&img, &StemWeights::identity(2, 3)).unwrap();
        assert_eq!(fm.shape(), (2, 3));
        for pi in 0..2 {
            for pj in 0..3 {
                let mut expect = Vec::new();
                for di in 0..2 {
                    for dj in 0..2 {
                        expect.extend(img.pixel(pi * 2 + di, pj * 2 + dj).iter().map(|&v| v as f64));
                    }
                }
                assert_eq!(fm.at(pi, pj), &expect[..]);
            }
        }
    }

    #[test]
    fn zero_projection_yields_bias() {
        let img = synth_noise(4, 4, 1, 2).unwrap();
        let w = StemWeights::new(2, 1, 2, vec![0.0; 8], vec![0.25, -1.5]).unwrap();
        let fm = patchify(&img, &w).unwrap();
        for t in 0..fm.tokens() {
            assert_eq!(fm.token(t), &[0.25, -1.5]);
        }
    }

    #[test]
    fn scaled_grayscale_pixels() {
        let img = ImageTensor::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let w = StemWeights::new(1, 1, 1, vec![2.0], vec![0.0]).unwrap();
        let fm = patchify(&img, &w).unwrap();
        let expect = [0.2, 0.4, 0.6, 0.8];
        for (got, want) in fm.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-7, "{got} vs {want}");
        }
    }

    #[test]
    fn indivisible_image_is_a_shape_error() {
        let img = synth_noise(5, 4, 1, 2).unwrap();
        let w = seeded_stem(2, 1, 3, 1);
        assert!(matches!(patchify(&img, &w), Err(Error::Shape(_))));
    }

    #[test]
    fn singleton_turn_equals_patchify() {
        let img = synth_noise(8, 8, 3, 5).unwrap();
        let w = seeded_stem(4, 3, 6, 9);
        let plain = patchify(&img, &w).unwrap();
        assert_eq!(rfn_aggregate(&img, &w, &[QuarterTurn::IDENTITY], false).unwrap(), plain);
    }

    #[test]
    fn constant_image_is_unchanged_by_rfn() {
        let img = ImageTensor::from_fn(8, 8, 3, |_, _, c| 0.2 + 0.3 * c as f32).unwrap();
        let w = seeded_stem(4, 3, 5, 3);
        let plain = patchify(&img, &w).unwrap();
        let agg = rfn_aggregate(&img, &w, &QuarterTurn::ALL, false).unwrap();
        assert_eq!(agg, plain);
    }

    #[test]
    fn full_group_matches_enumerated_back_rotations() {
        // Brute force: build each candidate grid by explicit coordinate lookup.
        let img = synth_noise(4, 4, 1, 21).unwrap();
        let w = StemWeights::identity(2, 1);
        let agg = rfn_aggregate(&img, &w, &QuarterTurn::ALL, false).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let mut best = vec![f64::NEG_INFINITY; 4];
                for q in QuarterTurn::ALL {
                    let rotated = rotate_quarter(&img, q);
                    // cell (r, c) of the back-rotated grid comes from the rotated grid's
                    // cell that (r, c) is carried to by q
                    let (rr, rc) = q.destination(2, 2, r, c);
                    for di in 0..2 {
                        for dj in 0..2 {
                            let v = rotated.get(rr * 2 + di, rc * 2 + dj, 0) as f64;
                            let k = di * 2 + dj;
                            best[k] = best[k].max(v);
                        }
                    }
                }
                assert_eq!(agg.at(r, c), &best[..]);
            }
        }
    }

    #[test]
    fn odd_turns_need_square_input() {
        let img = synth_noise(4, 8, 1, 2).unwrap();
        let w = seeded_stem(2, 1, 2, 1);
        assert!(matches!(rfn_aggregate(&img, &w, &QuarterTurn::ALL, false), Err(Error::Shape(_))));
        assert!(rfn_aggregate(&img, &w, &[QuarterTurn::new(0), QuarterTurn::new(2)], false).is_ok());
    }

    #[test]
    fn parallel_branches_match_sequential() {
        let img = synth_noise(16, 16, 3, 8).unwrap();
        let w = seeded_stem(4, 3, 8, 4);
        assert_eq!(
            rfn_aggregate(&img, &w, &QuarterTurn::ALL, true).unwrap(),
            rfn_aggregate(&img, &w, &QuarterTurn::ALL, false).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rfn_is_rotation_equivariant(seed in any::<u64>(), q in 0i64..4, side in 1usize..4) {
            let img = synth_noise(side * 4, side * 4, 3, seed).unwrap();
            let w = seeded_stem(4, 3, 5, seed ^ 0xABCD);
            let q = QuarterTurn::new(q);
            let lhs = rfn_aggregate(&rotate_quarter(&img, q), &w, &QuarterTurn::ALL, false).unwrap();
            let rhs = rfn_aggregate(&img, &w, &QuarterTurn::ALL, false).unwrap().rotate(q);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn rfn_dominates_plain_patchify(seed in any::<u64>()) {
            let img = synth_noise(8, 8, 3, seed).unwrap();
            let w = seeded_stem(4, 3, 5, seed.rotate_left(7));
            let plain = patchify(&img, &w).unwrap();
            let agg = rfn_aggregate(&img, &w, &QuarterTurn::ALL, false).unwrap();
            for (a, p) in agg.data().iter().zip(plain.data()) {
                prop_assert!(a >= p);
            }
        }

        #[test]
        fn patchify_is_linear_without_bias(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let a = synth_noise(4, 4, 1, seed).unwrap();
            let b = synth_noise(4, 4, 1, seed.wrapping_add(1)).unwrap();
            let mut w = seeded_stem(2, 1, 3, seed);
            w.bias = vec![0.0; 3];
            let fa = patchify(&a, &w).unwrap();
            let fb = patchify(&b, &w).unwrap();
            // the mixture can leave [0,1], so evaluate it through the linear map directly
            let lin = |x: &[f32], t: usize| -> Vec<f64> {
                let (pi, pj) = (t / 2, t % 2);
                let mut out = vec![0.0; 3];
                for di in 0..2 {
                    for dj in 0..2 {
                        let v = x[(pi * 2 + di) * 4 + pj * 2 + dj] as f64;
                        for (o, out_v) in out.iter_mut().enumerate() {
                            *out_v += v * w.projection[(di * 2 + dj) * 3 + o] as f64;
                        }
                    }
                }
                out
            };
            let mix: Vec<f32> = a.data().iter().zip(b.data())
                .map(|(x, y)| (alpha * *x as f64 + beta * *y as f64) as f32).collect();
            for t in 0..4 {
                let direct = lin(&mix, t);
                for c in 0..3 {
                    let combined = alpha * fa.token(t)[c] + beta * fb.token(t)[c];
                    prop_assert!((direct[c] - combined).abs() < 1e-5);
                }
            }
        }
    }
}
