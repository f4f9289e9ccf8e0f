//! The xorshift64* stream used for every seeded fixture and weight set.
//!
//! The generator is fixed so that fixtures and generated weights match
//! bit-for-bit across implementations:
//!
//! ```text
//! state = seed            (seed 0 is replaced by 0x9E3779B97F4A7C15)
//! state ^= state >> 12
//! state ^= state << 25
//! state ^= state >> 27
//! output = state * 0x2545F4914F6CDD1D   (wrapping)
//! unit float = (output >> 40) / 2^24
//! ```

const ZERO_SEED_REPLACEMENT: u64 = 0x9E37_79B9_7F4A_7C15;
const MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_SEED_REPLACEMENT } else { seed };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(MULTIPLIER)
    }

    /// Uniform in `[0, 1)` with 24 bits of resolution.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u32 << 24) as f32
    }

    /// Same 24-bit draw as [`next_f32`](Self::next_f32), widened.
    pub fn next_f64(&mut self) -> f64 {
        self.next_f32() as f64
    }

    /// Uniform in `[-scale, scale)`.
    pub fn symmetric(&mut self, scale: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * scale
    }

    /// Uniform index in `0..n` (modulo reduction; bias is irrelevant at fixture sizes).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_seed_is_remapped() {
        let mut a = XorShift64Star::new(0);
        let mut b = XorShift64Star::new(ZERO_SEED_REPLACEMENT);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn first_output_matches_hand_computation() {
        // seed 1: 1 ^ (1 >> 12) = 1; 1 ^ (1 << 25) = 0x2000001; ^ (>> 27) unchanged.
        let mut r = XorShift64Star::new(1);
        assert_eq!(r.next_u64(), 0x0200_0001u64.wrapping_mul(MULTIPLIER));
    }

    #[test]
    fn unit_floats_stay_in_range() {
        let mut r = XorShift64Star::new(42);
        for _ in 0..10_000 {
            let v = r.next_f32();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut r = XorShift64Star::new(9);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
