//! Bayer CFA sampling model: the mosaic grid, luminance/chrominance algebra
//! and black-offset handling.
//!
//! A colour image `(r, g, b)` is rewritten as a luminance `ℓ` and two
//! colour-difference proxies `α`, `β`:
//!
//! ```text
//! ℓ = r/4 + g/2 + b/4      r = ℓ + 2α + β
//! α = r/4 − b/4            g = ℓ      − β
//! β = r/4 − g/2 + b/4      b = ℓ − 2α + β
//! ```
//!
//! and the mosaic becomes `y = ℓ + d_α·α + d_β·β` with the modulation
//! functions `d_α(n) = (−1)^n0 + (−1)^n1` and `d_β(n) = (−1)^(n0+n1)`
//! evaluated relative to the red site.

use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::plane::Plane;

/// Colour channel recorded at a mosaic site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Red = 0,
    Green = 1,
    Blue = 2,
}

/// Position of the 2x2 Bayer tile relative to the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum CfaPhase {
    #[default]
    Rggb = 0,
    Grbg = 1,
    Gbrg = 2,
    Bggr = 3,
}

impl CfaPhase {
    pub const ALL: [CfaPhase; 4] = [CfaPhase::Rggb, CfaPhase::Grbg, CfaPhase::Gbrg, CfaPhase::Bggr];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown CFA phase id {v}")))
    }

    /// Row and column of the red site inside the 2x2 tile.
    pub fn red_site(self) -> (usize, usize) {
        match self {
            CfaPhase::Rggb => (0, 0),
            CfaPhase::Grbg => (0, 1),
            CfaPhase::Gbrg => (1, 0),
            CfaPhase::Bggr => (1, 1),
        }
    }

    /// Row and column flips that map this phase onto RGGB.
    pub fn flips(self) -> (bool, bool) {
        let (r, c) = self.red_site();
        (r == 1, c == 1)
    }

    pub fn channel_at(self, row: usize, col: usize) -> Channel {
        let (r0, c0) = self.red_site();
        match ((row + r0) & 1, (col + c0) & 1) {
            (0, 0) => Channel::Red,
            (1, 1) => Channel::Blue,
            _ => Channel::Green,
        }
    }

    /// Sampling indicator `c(n)` as a one-hot triple.
    pub fn indicator(self, row: usize, col: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        c[self.channel_at(row, col) as usize] = 1.0;
        c
    }

    /// Modulation functions `(d_α, d_β)` at a site.
    pub fn modulation(self, row: usize, col: usize) -> (i32, i32) {
        let (r0, c0) = self.red_site();
        let sr = if (row + r0) & 1 == 0 { 1 } else { -1 };
        let sc = if (col + c0) & 1 == 0 { 1 } else { -1 };
        (sr + sc, sr * sc)
    }
}

impl FromStr for CfaPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPhase::Rggb),
            "GRBG" => Ok(CfaPhase::Grbg),
            "GBRG" => Ok(CfaPhase::Gbrg),
            "BGGR" => Ok(CfaPhase::Bggr),
            other => Err(Error::InvalidParameter(format!("unknown CFA pattern {other:?}"))),
        }
    }
}

impl fmt::Display for CfaPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CfaPhase::Rggb => "RGGB",
            CfaPhase::Grbg => "GRBG",
            CfaPhase::Gbrg => "GBRG",
            CfaPhase::Bggr => "BGGR",
        })
    }
}

/// Per-channel black offsets `(k_r, k_g, k_b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlackOffset(pub [u16; 3]);

impl BlackOffset {
    pub fn for_channel(self, ch: Channel) -> i32 {
        self.0[ch as usize] as i32
    }
}

/// Integer CFA mosaic with its acquisition metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerImage {
    samples: Plane<u16>,
    bit_depth: u8,
    phase: CfaPhase,
    black_offset: BlackOffset,
}

impl BayerImage {
    pub fn new(
        samples: Plane<u16>,
        bit_depth: u8,
        phase: CfaPhase,
        black_offset: BlackOffset,
    ) -> Result<Self> {
        if !(8..=16).contains(&bit_depth) {
            return Err(Error::BitDepth(bit_depth));
        }
        check_even(samples.width(), samples.height())?;
        let max = max_sample(bit_depth);
        if let Some(i) = samples.data().iter().position(|&v| v as u32 > max) {
            return Err(Error::SampleRange {
                row: i / samples.width(),
                col: i % samples.width(),
                value: samples.data()[i] as i64,
                bit_depth,
            });
        }
        Ok(Self {
            samples,
            bit_depth,
            phase,
            black_offset,
        })
    }

    pub fn width(&self) -> usize {
        self.samples.width()
    }

    pub fn height(&self) -> usize {
        self.samples.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.samples.len()
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn phase(&self) -> CfaPhase {
        self.phase
    }

    pub fn black_offset(&self) -> BlackOffset {
        self.black_offset
    }

    pub fn samples(&self) -> &Plane<u16> {
        &self.samples
    }

    pub fn max_value(&self) -> u32 {
        max_sample(self.bit_depth)
    }

    /// Largest offset-free signal value, used to normalise into `[0, 1]`.
    pub fn peak(&self) -> f64 {
        max_sample(self.bit_depth) as f64
    }

    pub fn with_black_offset(mut self, k: BlackOffset) -> Self {
        self.black_offset = k;
        self
    }
}

pub(crate) fn max_sample(bit_depth: u8) -> u32 {
    (1u32 << bit_depth) - 1
}

pub(crate) fn check_even(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return dim_err(format!(
            "mosaic dimensions {width}x{height} must be even and non-zero"
        ));
    }
    Ok(())
}

/// Colour space of a [`ColorImage`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    Lab,
}

/// Three real-valued planes of equal size with a colour-space tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub planes: [Plane<f64>; 3],
    pub space: ColorSpace,
}

impl ColorImage {
    pub fn new(planes: [Plane<f64>; 3], space: ColorSpace) -> Result<Self> {
        if !planes[0].same_shape(&planes[1]) || !planes[0].same_shape(&planes[2]) {
            return dim_err("colour planes differ in size");
        }
        Ok(Self { planes, space })
    }

    pub fn constant(width: usize, height: usize, value: [f64; 3], space: ColorSpace) -> Self {
        Self {
            planes: value.map(|v| Plane::filled(width, height, v)),
            space,
        }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        [
            self.planes[0].get(row, col),
            self.planes[1].get(row, col),
            self.planes[2].get(row, col),
        ]
    }

    /// Applies `f` to every pixel triple.
    pub fn map_pixels(&self, space: ColorSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> ColorImage {
        let (w, h) = (self.width(), self.height());
        let mut out = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
        for i in 0..w * h {
            let p = f([
                self.planes[0].data()[i],
                self.planes[1].data()[i],
                self.planes[2].data()[i],
            ]);
            for (o, v) in out.iter_mut().zip(p) {
                o.data_mut()[i] = v;
            }
        }
        ColorImage { planes: out, space }
    }
}

#[inline]
pub fn rgb_to_lab_px([r, g, b]: [f64; 3]) -> [f64; 3] {
    [
        0.25 * r + 0.5 * g + 0.25 * b,
        0.25 * r - 0.25 * b,
        0.25 * r - 0.5 * g + 0.25 * b,
    ]
}

#[inline]
pub fn lab_to_rgb_px([l, a, b]: [f64; 3]) -> [f64; 3] {
    [l + 2.0 * a + b, l - b, l - 2.0 * a + b]
}

pub fn rgb_to_lab(c: &ColorImage) -> Result<ColorImage> {
    if c.space != ColorSpace::Rgb {
        return Err(Error::InvalidParameter("expected an RGB image".into()));
    }
    Ok(c.map_pixels(ColorSpace::Lab, rgb_to_lab_px))
}

pub fn lab_to_rgb(c: &ColorImage) -> Result<ColorImage> {
    if c.space != ColorSpace::Lab {
        return Err(Error::InvalidParameter("expected an ℓαβ image".into()));
    }
    Ok(c.map_pixels(ColorSpace::Rgb, lab_to_rgb_px))
}

/// Real-valued mosaic through the sampling indicator, `y(n) = c(n)·x(n)`.
pub fn mosaic_values(c: &ColorImage, phase: CfaPhase) -> Result<Plane<f64>> {
    if c.space != ColorSpace::Rgb {
        return Err(Error::InvalidParameter("expected an RGB image".into()));
    }
    check_even(c.width(), c.height())?;
    Ok(Plane::from_fn(c.width(), c.height(), |r, col| {
        c.planes[phase.channel_at(r, col) as usize].get(r, col)
    }))
}

/// Real-valued mosaic through the modulation form, `y = ℓ + d_α·α + d_β·β`.
pub fn mosaic_from_lab(lab: &ColorImage, phase: CfaPhase) -> Result<Plane<f64>> {
    if lab.space != ColorSpace::Lab {
        return Err(Error::InvalidParameter("expected an ℓαβ image".into()));
    }
    check_even(lab.width(), lab.height())?;
    Ok(Plane::from_fn(lab.width(), lab.height(), |r, c| {
        let (da, db) = phase.modulation(r, c);
        lab.planes[0].get(r, c) + da as f64 * lab.planes[1].get(r, c) + db as f64 * lab.planes[2].get(r, c)
    }))
}

/// Samples an RGB image on the Bayer grid, rounding to integers.
pub fn mosaic(c: &ColorImage, phase: CfaPhase, bit_depth: u8) -> Result<BayerImage> {
    let y = mosaic_values(c, phase)?;
    let max = max_sample(bit_depth) as f64;
    let mut samples = Plane::<u16>::new(y.width(), y.height());
    for (i, &v) in y.data().iter().enumerate() {
        let q = v.round();
        if !(0.0..=max).contains(&q) {
            return Err(Error::SampleRange {
                row: i / y.width(),
                col: i % y.width(),
                value: q as i64,
                bit_depth,
            });
        }
        samples.data_mut()[i] = q as u16;
    }
    BayerImage::new(samples, bit_depth, phase, BlackOffset::default())
}

/// `y'(n) = y(n) − k_channel(n)`; results may be negative.
pub fn subtract_black_offset(y: &BayerImage) -> Plane<i32> {
    let k = y.black_offset;
    let phase = y.phase;
    let w = y.width();
    let mut out = Plane::<i32>::new(w, y.height());
    for r in 0..y.height() {
        let src = y.samples.row(r);
        for (c, (o, &v)) in out.row_mut(r).iter_mut().zip(src).enumerate() {
            *o = v as i32 - k.for_channel(phase.channel_at(r, c));
        }
    }
    out
}

/// Inverse of [`subtract_black_offset`]. Fails if a restored sample leaves
/// the `bit_depth` range.
pub fn add_black_offset(
    signal: &Plane<i32>,
    bit_depth: u8,
    phase: CfaPhase,
    k: BlackOffset,
) -> Result<BayerImage> {
    let max = max_sample(bit_depth) as i64;
    let mut samples = Plane::<u16>::new(signal.width(), signal.height());
    for r in 0..signal.height() {
        for c in 0..signal.width() {
            let v = signal.get(r, c) as i64 + k.for_channel(phase.channel_at(r, c)) as i64;
            if !(0..=max).contains(&v) {
                return Err(Error::SampleRange {
                    row: r,
                    col: c,
                    value: v,
                    bit_depth,
                });
            }
            samples.set(r, c, v as u16);
        }
    }
    BayerImage::new(samples, bit_depth, phase, k)
}

/// Adds black offsets to a real reconstruction, rounding and clamping into range.
pub fn add_black_offset_clamped(
    signal: &Plane<f64>,
    bit_depth: u8,
    phase: CfaPhase,
    k: BlackOffset,
) -> Result<BayerImage> {
    let max = max_sample(bit_depth) as f64;
    let mut samples = Plane::<u16>::new(signal.width(), signal.height());
    for r in 0..signal.height() {
        for c in 0..signal.width() {
            let v = signal.get(r, c) + k.for_channel(phase.channel_at(r, c)) as f64;
            samples.set(r, c, v.round().clamp(0.0, max) as u16);
        }
    }
    BayerImage::new(samples, bit_depth, phase, k)
}

/// Flips a mosaic-aligned plane so that `phase` becomes RGGB. Self-inverse.
pub fn normalize_phase<T: Copy + Default>(plane: &Plane<T>, phase: CfaPhase) -> Plane<T> {
    match phase.flips() {
        (false, false) => plane.clone(),
        (true, false) => plane.flip_rows(),
        (false, true) => plane.flip_cols(),
        (true, true) => plane.flip_rows().flip_cols(),
    }
}

/// The four half-resolution polyphase planes `(R, G1, G2, B)`; `G1` shares
/// rows with red.
pub fn demux(y: &BayerImage) -> [Plane<u16>; 4] {
    let (r0, c0) = y.phase.red_site();
    let sites = [
        (r0, c0),
        (r0, c0 ^ 1),
        (r0 ^ 1, c0),
        (r0 ^ 1, c0 ^ 1),
    ];
    let (w, h) = (y.width() / 2, y.height() / 2);
    sites.map(|(dr, dc)| Plane::from_fn(w, h, |r, c| y.samples.get(2 * r + dr, 2 * c + dc)))
}

/// Re-interleaves the planes produced by [`demux`].
pub fn interleave(planes: &[Plane<u16>; 4], phase: CfaPhase) -> Result<Plane<u16>> {
    let (w, h) = (planes[0].width(), planes[0].height());
    if planes.iter().any(|p| p.width() != w || p.height() != h) {
        return dim_err("polyphase planes differ in size");
    }
    let (r0, c0) = phase.red_site();
    let sites = [
        (r0, c0),
        (r0, c0 ^ 1),
        (r0 ^ 1, c0),
        (r0 ^ 1, c0 ^ 1),
    ];
    let mut out = Plane::<u16>::new(2 * w, 2 * h);
    for (p, (dr, dc)) in planes.iter().zip(sites) {
        for r in 0..h {
            for c in 0..w {
                out.set(2 * r + dr, 2 * c + dc, p.get(r, c));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn lab_examples() {
        assert!(close(rgb_to_lab_px([7.0, 7.0, 7.0]), [7.0, 0.0, 0.0]));
        assert!(close(rgb_to_lab_px([4.0, 0.0, 0.0]), [1.0, 1.0, 1.0]));
        assert!(close(rgb_to_lab_px([1.0, 2.0, 3.0]), [2.0, -0.5, 0.0]));
        assert!(close(lab_to_rgb_px([5.0, 0.0, 0.0]), [5.0, 5.0, 5.0]));
        assert!(close(lab_to_rgb_px([2.0, -0.5, 0.0]), [1.0, 2.0, 3.0]));
    }

    #[test]
    fn lab_matrices_are_inverse() {
        let fwd = [[0.25, 0.5, 0.25], [0.25, 0.0, -0.25], [0.25, -0.5, 0.25]];
        let inv = [[1.0, 2.0, 1.0], [1.0, 0.0, -1.0], [1.0, -2.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| inv[i][k] * fwd[k][j]).sum();
                assert_eq!(s, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rggb_sites_and_modulation() {
        let p = CfaPhase::Rggb;
        assert_eq!(p.channel_at(0, 0), Channel::Red);
        assert_eq!(p.channel_at(0, 1), Channel::Green);
        assert_eq!(p.channel_at(1, 0), Channel::Green);
        assert_eq!(p.channel_at(1, 1), Channel::Blue);
        assert_eq!(p.modulation(0, 0), (2, 1));
        assert_eq!(p.modulation(0, 1), (0, -1));
        assert_eq!(p.modulation(1, 1), (-2, 1));
    }

    #[test]
    fn modulation_ranges() {
        for phase in CfaPhase::ALL {
            for r in 0..4 {
                for c in 0..4 {
                    let (da, db) = phase.modulation(r, c);
                    assert!([-2, 0, 2].contains(&da));
                    assert!([-1, 1].contains(&db));
                }
            }
        }
    }

    #[test]
    fn gray_mosaic_is_constant() {
        let img = ColorImage::constant(8, 6, [321.0; 3], ColorSpace::Rgb);
        let y = mosaic(&img, CfaPhase::Gbrg, 12).unwrap();
        assert!(y.samples().data().iter().all(|&v| v == 321));
    }

    #[test]
    fn odd_dimensions_rejected() {
        let img = ColorImage::constant(7, 6, [1.0; 3], ColorSpace::Rgb);
        assert!(matches!(mosaic(&img, CfaPhase::Rggb, 12), Err(Error::Dimension(_))));
    }

    #[test]
    fn black_offset_examples() {
        let samples = Plane::from_vec(2, 2, vec![300, 100, 100, 50]).unwrap();
        let y = BayerImage::new(samples, 12, CfaPhase::Rggb, BlackOffset([256, 256, 0])).unwrap();
        let s = subtract_black_offset(&y);
        assert_eq!(s.data(), &[44, -156, -156, 50]);
        let z = y.clone().with_black_offset(BlackOffset::default());
        assert_eq!(subtract_black_offset(&z).data(), &[300, 100, 100, 50]);
        let back = add_black_offset(&s, 12, CfaPhase::Rggb, BlackOffset([256, 256, 0])).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn demux_examples() {
        let samples = Plane::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap();
        let y = BayerImage::new(samples, 8, CfaPhase::Rggb, BlackOffset::default()).unwrap();
        let [r, g1, g2, b] = demux(&y);
        assert_eq!((r.data(), g1.data(), g2.data(), b.data()), (&[1u16][..], &[2u16][..], &[3u16][..], &[4u16][..]));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for phase in CfaPhase::ALL {
            let s = Plane::from_fn(4, 4, |_, _| rng.random_range(0..4096u16));
            let y = BayerImage::new(s, 12, phase, BlackOffset::default()).unwrap();
            let planes = demux(&y);
            assert!(planes.iter().all(|p| p.width() == 2 && p.height() == 2));
            assert_eq!(&interleave(&planes, phase).unwrap(), y.samples());
            // The first plane always holds red samples.
            assert_eq!(y.phase().channel_at(y.phase().red_site().0, y.phase().red_site().1), Channel::Red);
        }
    }

    #[test]
    fn phase_normalization_is_an_involution_and_yields_rggb() {
        for phase in CfaPhase::ALL {
            let p = Plane::from_fn(6, 4, |r, c| phase.channel_at(r, c) as u8);
            let n = normalize_phase(&p, phase);
            let rggb = Plane::from_fn(6, 4, |r, c| CfaPhase::Rggb.channel_at(r, c) as u8);
            assert_eq!(n, rggb);
            assert_eq!(normalize_phase(&n, phase), p);
        }
    }

    #[test]
    fn samples_out_of_range_rejected() {
        let s = Plane::from_vec(2, 2, vec![0, 0, 0, 1024]).unwrap();
        assert!(BayerImage::new(s.clone(), 10, CfaPhase::Rggb, BlackOffset::default()).is_err());
        assert!(BayerImage::new(s, 11, CfaPhase::Rggb, BlackOffset::default()).is_ok());
    }
}
