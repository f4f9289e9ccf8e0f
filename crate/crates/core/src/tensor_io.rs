//! Image ingestion, exact quarter-turn rotation and seeded test images.

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Dense `height x width x channels` raster, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::arg(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::arg(format!("sample {pos} outside [0,1]: {}", data[pos])));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Rotation by a multiple of 90 degrees counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct QuarterTurn(u8);

impl QuarterTurn {
    pub const IDENTITY: QuarterTurn = QuarterTurn(0);
    pub const ALL: [QuarterTurn; 4] = [QuarterTurn(0), QuarterTurn(1), QuarterTurn(2), QuarterTurn(3)];

    pub fn new(turns: i64) -> Self {
        QuarterTurn(turns.rem_euclid(4) as u8)
    }

    pub fn turns(self) -> u8 {
        self.0
    }

    pub fn then(self, other: QuarterTurn) -> QuarterTurn {
        QuarterTurn((self.0 + other.0) % 4)
    }

    pub fn inverse(self) -> QuarterTurn {
        QuarterTurn((4 - self.0) % 4)
    }

    pub fn is_odd(self) -> bool {
        self.0 % 2 == 1
    }

    /// Output grid shape for an input of `rows x cols`.
    pub fn output_shape(self, rows: usize, cols: usize) -> (usize, usize) {
        if self.is_odd() {
            (cols, rows)
        } else {
            (rows, cols)
        }
    }

    /// Input coordinate read by output cell `(i, j)` of a rotated `rows x cols` grid.
    ///
    /// One quarter turn maps `out(i, j) = in(j, cols - 1 - i)`.
    #[inline]
    pub fn source(self, rows: usize, cols: usize, i: usize, j: usize) -> (usize, usize) {
        match self.0 {
            0 => (i, j),
            1 => (j, cols - 1 - i),
            2 => (rows - 1 - i, cols - 1 - j),
            _ => (rows - 1 - j, i),
        }
    }

    /// Where input cell `(r, c)` lands after rotating a `rows x cols` grid.
    #[inline]
    pub fn destination(self, rows: usize, cols: usize, r: usize, c: usize) -> (usize, usize) {
        let (orows, ocols) = self.output_shape(rows, cols);
        self.inverse().source(orows, ocols, r, c)
    }
}

impl std::fmt::Display for QuarterTurn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0 as u32 * 90)
    }
}

/// Rotates any row-major grid of `width`-sized cells.
pub(crate) fn rotate_grid<T: Copy>(
    data: &[T],
    rows: usize,
    cols: usize,
    cell: usize,
    q: QuarterTurn,
) -> Vec<T> {
    let (orows, ocols) = q.output_shape(rows, cols);
    let mut out = Vec::with_capacity(data.len());
    for i in 0..orows {
        for j in 0..ocols {
            let (si, sj) = q.source(rows, cols, i, j);
            let start = (si * cols + sj) * cell;
            out.extend_from_slice(&data[start..start + cell]);
        }
    }
    out
}

pub fn rotate_quarter(img: &ImageTensor, q: QuarterTurn) -> ImageTensor {
    if q == QuarterTurn::IDENTITY {
        return img.clone();
    }
    let (height, width) = q.output_shape(img.height, img.width);
    ImageTensor {
        height,
        width,
        channels: img.channels,
        data: rotate_grid(&img.data, img.height, img.width, img.channels, q),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn expect_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(Error::parse(self.pos, "expected whitespace")),
            None => Err(Error::parse(self.pos, "unexpected end of header")),
        }
    }

    fn skip_whitespace(&mut self) {
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_whitespace();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (start, v))
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

/// Decodes a binary `P6` PPM with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::parse(0, "missing P6 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    cur.expect_whitespace()?;
    let (_, width) = cur.number("width")?;
    let (_, height) = cur.number("height")?;
    let (maxval_at, maxval) = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} unsupported, need 255")));
    }
    cur.expect_whitespace()?;
    if width == 0 || height == 0 {
        return Err(Error::parse(2, "zero image dimension"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::parse(2, "dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::parse(
            cur.pos + payload.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let data = payload[..need].iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::new(height, width, 3, data)
}

/// Encodes a 3-channel image as `P6`, rounding each sample to the nearest of 256 levels.
pub fn write_ppm(img: &ImageTensor) -> Result<Vec<u8>> {
    if img.channels != 3 {
        return Err(Error::Unsupported(format!(
            "PPM output needs 3 channels, image has {}",
            img.channels
        )));
    }
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

/// Two vertical half-planes of patches whose mean intensities differ by at least `gap`.
///
/// Per-pixel noise amplitude defaults to `gap / 8`.
pub fn synth_two_cluster(hp: usize, wp: usize, patch: usize, gap: f32, seed: u64) -> Result<ImageTensor> {
    synth_two_cluster_with_noise(hp, wp, patch, gap, gap / 8.0, seed)
}

/// [`synth_two_cluster`] with explicit noise amplitude (clamped so samples stay in `[0,1]`).
pub fn synth_two_cluster_with_noise(
    hp: usize,
    wp: usize,
    patch: usize,
    gap: f32,
    noise: f32,
    seed: u64,
) -> Result<ImageTensor> {
    if hp < 2 || wp < 2 || patch == 0 {
        return Err(Error::arg(format!("need hp, wp >= 2 and patch >= 1, got {hp}x{wp}, patch {patch}")));
    }
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(Error::arg(format!("gap must lie in (0, 1], got {gap}")));
    }
    if !(0.0..gap / 4.0).contains(&noise) {
        return Err(Error::arg(format!("noise {noise} must be below gap/4")));
    }
    let amp = noise.min((1.0 - gap) / 2.0).max(0.0);
    let lo = ((1.0 - gap - 2.0 * amp) / 2.0).max(0.0);
    let hi = lo + amp + gap;
    let split = wp / 2;
    let mut rng = XorShift64Star::new(seed);
    ImageTensor::from_fn(hp * patch, wp * patch, 3, |_, j, _| {
        let u = rng.next_f32();
        let base = if j / patch < split { lo } else { hi };
        (base + amp * u).clamp(0.0, 1.0)
    })
}

/// Uniform per-pixel noise; generic position for all practical purposes.
pub fn synth_noise(height: usize, width: usize, channels: usize, seed: u64) -> Result<ImageTensor> {
    let mut rng = XorShift64Star::new(seed);
    ImageTensor::from_fn(height, width, channels, |_, _, _| rng.next_f32())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(h: usize, w: usize, vals: &[f32]) -> ImageTensor {
        ImageTensor::new(h, w, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn reads_single_red_pixel() {
        let img = read_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (1, 1, 3));
        assert_eq!(img.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn reads_row_major_pixels() {
        let img = read_ppm(b"P6 2 1 255 \x00\x00\x00\xff\xff\xff").unwrap();
        assert_eq!(img.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let err = read_ppm(b"P6\n1 1\n255\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 11, .. }), "{err}");
    }

    #[test]
    fn header_errors_name_offsets() {
        assert!(matches!(read_ppm(b"P5\n1 1\n255\n\0"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(read_ppm(b"P6\n1 1\n15\n\0\0\0"), Err(Error::Parse { offset: 7, .. })));
        assert!(matches!(read_ppm(b"P6\nx 1\n255\n"), Err(Error::Parse { offset: 3, .. })));
    }

    #[test]
    fn writes_red_pixel_payload() {
        let img = ImageTensor::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let bytes = write_ppm(&img).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0xFF, 0x00, 0x00]);
    }

    #[test]
    fn single_channel_write_is_rejected() {
        let img = gray(1, 1, &[0.5]);
        assert!(matches!(write_ppm(&img), Err(Error::Unsupported(_))));
    }

    #[test]
    fn quarter_turn_of_two_by_two() {
        // [[a,b],[c,d]] -> [[b,d],[a,c]]
        let img = gray(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let r = rotate_quarter(&img, QuarterTurn::new(1));
        assert_eq!(r.data(), &[0.2, 0.4, 0.1, 0.3]);
    }

    #[test]
    fn identity_and_half_turn_involution() {
        let img = synth_noise(3, 5, 3, 4).unwrap();
        assert_eq!(rotate_quarter(&img, QuarterTurn::IDENTITY), img);
        let half = QuarterTurn::new(2);
        assert_eq!(rotate_quarter(&rotate_quarter(&img, half), half), img);
    }

    #[test]
    fn odd_turns_swap_dimensions() {
        let img = synth_noise(3, 5, 1, 4).unwrap();
        let r = rotate_quarter(&img, QuarterTurn::new(3));
        assert_eq!((r.height(), r.width()), (5, 3));
    }

    #[test]
    fn destination_inverts_source() {
        for q in QuarterTurn::ALL {
            let (rows, cols) = (3, 5);
            let (orows, ocols) = q.output_shape(rows, cols);
            for i in 0..orows {
                for j in 0..ocols {
                    let (r, c) = q.source(rows, cols, i, j);
                    assert_eq!(q.destination(rows, cols, r, c), (i, j));
                }
            }
        }
    }

    #[test]
    fn two_cluster_is_deterministic() {
        let a = synth_two_cluster(2, 2, 16, 0.5, 1).unwrap();
        let b = synth_two_cluster(2, 2, 16, 0.5, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_full_gap_is_binary() {
        let img = synth_two_cluster_with_noise(2, 4, 2, 1.0, 0.0, 3).unwrap();
        for i in 0..img.height() {
            for j in 0..img.width() {
                let expect = if j < 4 { 0.0 } else { 1.0 };
                assert!(img.pixel(i, j).iter().all(|&v| v == expect));
            }
        }
    }

    #[test]
    fn two_cluster_halves_differ_by_gap() {
        let (hp, wp, p) = (14, 14, 16);
        let img = synth_two_cluster(hp, wp, p, 0.5, 7).unwrap();
        let (mut left, mut right, mut nl, mut nr) = (0.0f64, 0.0f64, 0usize, 0usize);
        for i in 0..img.height() {
            for j in 0..img.width() {
                for &v in img.pixel(i, j) {
                    if j < wp / 2 * p {
                        left += v as f64;
                        nl += 1;
                    } else {
                        right += v as f64;
                        nr += 1;
                    }
                }
            }
        }
        assert!(right / nr as f64 - left / nl as f64 >= 0.5);
    }

    #[test]
    fn two_cluster_rejects_bad_arguments() {
        assert!(synth_two_cluster(1, 4, 2, 0.5, 1).is_err());
        assert!(synth_two_cluster(2, 2, 2, 0.0, 1).is_err());
        assert!(synth_two_cluster(2, 2, 2, 1.5, 1).is_err());
    }

    fn arb_image() -> impl Strategy<Value = ImageTensor> {
        (1usize..6, 1usize..6, prop_oneof![Just(1usize), Just(3usize)], any::<u64>())
            .prop_map(|(h, w, c, seed)| synth_noise(h, w, c, seed).unwrap())
    }

    proptest! {
        #[test]
        fn rotations_compose_cyclically(img in arb_image(), a in 0i64..4, b in 0i64..4) {
            let (qa, qb) = (QuarterTurn::new(a), QuarterTurn::new(b));
            let lhs = rotate_quarter(&rotate_quarter(&img, qa), qb);
            prop_assert_eq!(lhs, rotate_quarter(&img, qa.then(qb)));
        }

        #[test]
        fn ppm_round_trip_within_quantization(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
            let img = synth_noise(h, w, 3, seed).unwrap();
            let bytes = write_ppm(&img).unwrap();
            let back = read_ppm(&bytes).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
            prop_assert_eq!(write_ppm(&back).unwrap(), bytes);
        }
    }
}
