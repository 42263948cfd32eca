//! Camera processing chain: colour correction, white balance and sRGB
//! gamma, a bilinear demosaicker, and the mapping between level-1 subbands
//! and a quarter-resolution colour image.

use nalgebra::{Matrix3, Vector3};

use crate::cfa::{lab_to_rgb_px, rgb_to_lab_px, BayerImage, CfaPhase, ColorImage, ColorSpace};
use crate::error::{dim_err, Error, Result};
use crate::plane::Plane;
use crate::wavelet::Cdf97;

pub const SRGB_BREAK: f64 = 0.0031308;
pub const SRGB_SLOPE: f64 = 12.92;
pub const SRGB_SCALE: f64 = 1.055;
pub const SRGB_OFFSET: f64 = 0.055;
pub const SRGB_EXPONENT: f64 = 1.0 / 2.4;
/// Largest condition number accepted for a colour-correction matrix.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Gamma {
    #[default]
    Srgb = 0,
    Identity = 1,
}

impl Gamma {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Srgb),
            1 => Ok(Self::Identity),
            _ => Err(Error::Format(format!("unknown gamma id {v}"))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srgb" => Ok(Self::Srgb),
            "identity" | "linear" | "none" => Ok(Self::Identity),
            _ => Err(Error::InvalidParameter(format!("unknown gamma {s:?}"))),
        }
    }

    /// Forward curve on non-negative input, without clamping at 1.
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Gamma::Srgb => srgb_curve(v),
            Gamma::Identity => v,
        }
    }

    #[inline]
    pub fn invert(self, v: f64) -> f64 {
        match self {
            Gamma::Srgb => srgb_curve_inverse(v),
            Gamma::Identity => v,
        }
    }
}

/// Colour correction matrix `A`, illuminant `i` and gamma curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub color_matrix: Matrix3<f64>,
    pub illuminant: [f64; 3],
    pub gamma: Gamma,
}

impl PipelineParams {
    pub fn new(color_matrix: Matrix3<f64>, illuminant: [f64; 3], gamma: Gamma) -> Result<Self> {
        let p = Self { color_matrix, illuminant, gamma };
        p.validate()?;
        Ok(p)
    }

    /// `A = I`, `i = (1, 1, 1)`, no gamma.
    pub fn identity() -> Self {
        Self {
            color_matrix: Matrix3::identity(),
            illuminant: [1.0; 3],
            gamma: Gamma::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_matrix(&self.color_matrix)?;
        check_illuminant(self.illuminant)
    }

    /// Rounds every parameter to `f32`, the precision stored in a stream.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            color_matrix: self.color_matrix.map(|v| v as f32 as f64),
            illuminant: self.illuminant.map(|v| v as f32 as f64),
            gamma: self.gamma,
        }
    }
}

fn check_matrix(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let sv = a.singular_values();
    let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !cond.is_finite() || cond >= MAX_CONDITION {
        return Err(Error::SingularMatrix(cond));
    }
    a.try_inverse().ok_or(Error::SingularMatrix(f64::INFINITY))
}

fn check_illuminant(i: [f64; 3]) -> Result<()> {
    if i.iter().all(|&v| v.is_finite() && v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("illuminant components must be > 0, got {i:?}")))
    }
}

fn check_rgb(x: &ColorImage) -> Result<()> {
    if x.space == ColorSpace::Rgb {
        Ok(())
    } else {
        Err(Error::InvalidParameter("expected an RGB image".into()))
    }
}

fn apply_matrix(x: &ColorImage, a: &Matrix3<f64>) -> ColorImage {
    x.map_pixels(ColorSpace::Rgb, |p| {
        let v = a * Vector3::from(p);
        [v[0], v[1], v[2]]
    })
}

/// `A·x` per pixel.
pub fn color_correct(x: &ColorImage, a: &Matrix3<f64>) -> Result<ColorImage> {
    check_rgb(x)?;
    check_matrix(a)?;
    Ok(apply_matrix(x, a))
}

/// `A⁻¹·x` per pixel.
pub fn color_correct_inverse(x: &ColorImage, a: &Matrix3<f64>) -> Result<ColorImage> {
    check_rgb(x)?;
    let inv = check_matrix(a)?;
    Ok(apply_matrix(x, &inv))
}

/// Divides each channel by the matching illuminant component.
pub fn white_balance(x: &ColorImage, i: [f64; 3]) -> Result<ColorImage> {
    check_rgb(x)?;
    check_illuminant(i)?;
    Ok(x.map_pixels(ColorSpace::Rgb, |p| [p[0] / i[0], p[1] / i[1], p[2] / i[2]]))
}

pub fn white_balance_inverse(x: &ColorImage, i: [f64; 3]) -> Result<ColorImage> {
    check_rgb(x)?;
    check_illuminant(i)?;
    Ok(x.map_pixels(ColorSpace::Rgb, |p| [p[0] * i[0], p[1] * i[1], p[2] * i[2]]))
}

#[inline]
fn srgb_curve(v: f64) -> f64 {
    if v <= SRGB_BREAK {
        SRGB_SLOPE * v
    } else {
        SRGB_SCALE * v.powf(SRGB_EXPONENT) - SRGB_OFFSET
    }
}

#[inline]
fn srgb_curve_inverse(v: f64) -> f64 {
    if v <= SRGB_SLOPE * SRGB_BREAK {
        v / SRGB_SLOPE
    } else {
        ((v + SRGB_OFFSET) / SRGB_SCALE).powf(1.0 / SRGB_EXPONENT)
    }
}

/// sRGB encoding of `v` clamped to `[0, 1]`. The flag reports whether
/// clamping was needed.
pub fn gamma_srgb_checked(v: f64) -> (f64, bool) {
    let c = v.clamp(0.0, 1.0);
    (srgb_curve(c), c != v)
}

pub fn gamma_srgb(v: f64) -> f64 {
    gamma_srgb_checked(v).0
}

pub fn gamma_srgb_inverse(v: f64) -> f64 {
    srgb_curve_inverse(v.clamp(0.0, 1.0))
}

/// Magnitudes and per-channel sign planes (`true` for negative values).
#[derive(Clone, Debug, PartialEq)]
pub struct SignSplit {
    pub magnitude: ColorImage,
    pub negative: [Plane<bool>; 3],
}

pub fn split_magnitude_sign(x: &ColorImage) -> SignSplit {
    SignSplit {
        magnitude: x.map_pixels(x.space, |p| p.map(f64::abs)),
        negative: [0, 1, 2].map(|c| x.planes[c].map(|v| v < 0.0)),
    }
}

pub fn recombine(split: &SignSplit) -> Result<ColorImage> {
    let mut planes = split.magnitude.planes.clone();
    for (p, neg) in planes.iter_mut().zip(&split.negative) {
        if !p.same_shape(neg) {
            return dim_err("sign plane does not match magnitudes");
        }
        for (v, &n) in p.data_mut().iter_mut().zip(neg.data()) {
            if n {
                *v = -*v;
            }
        }
    }
    ColorImage::new(planes, split.magnitude.space)
}

/// DC gain of the lowpass and Nyquist gain of the highpass analysis filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandGains {
    pub low: f64,
    pub high: f64,
}

impl BandGains {
    pub fn legall53() -> Self {
        Self { low: 1.0, high: -2.0 }
    }

    pub fn cdf97() -> Self {
        let (low, high) = Cdf97::gains();
        Self { low, high }
    }
}

/// Reads `(w_LL, v_s, w_HH)` as a quarter-resolution `(ℓ, α, β)` image and
/// converts it to RGB. Band gains are divided out, and `sum_gain` is the
/// factor relating `v_s` to the mean of LH and HL (`2ka` for a matrix
/// `k·[[a, a], [b, −b]]`, 1 for the integer sum/difference).
pub fn quarter_rgb_from_bands(
    ll: &Plane<f64>,
    vs: &Plane<f64>,
    hh: &Plane<f64>,
    gains: BandGains,
    sum_gain: f64,
) -> Result<ColorImage> {
    if !ll.same_shape(vs) || !ll.same_shape(hh) {
        return dim_err("quarter-resolution bands differ in size");
    }
    if sum_gain == 0.0 || !sum_gain.is_finite() {
        return Err(Error::InvalidParameter("sum gain must be nonzero".into()));
    }
    let sl = 1.0 / (gains.low * gains.low);
    let sa = 1.0 / (sum_gain * gains.low * gains.high);
    let sb = 1.0 / (gains.high * gains.high);
    let lab = ColorImage::new([ll.map(|v| v * sl), vs.map(|v| v * sa), hh.map(|v| v * sb)], ColorSpace::Lab)?;
    Ok(lab.map_pixels(ColorSpace::Rgb, lab_to_rgb_px))
}

/// Inverse of [`quarter_rgb_from_bands`], returning `(w_LL, v_s, w_HH)`.
pub fn bands_from_quarter_rgb(
    rgb: &ColorImage,
    gains: BandGains,
    sum_gain: f64,
) -> Result<[Plane<f64>; 3]> {
    check_rgb(rgb)?;
    let lab = rgb.map_pixels(ColorSpace::Lab, rgb_to_lab_px);
    let [l, a, b] = lab.planes;
    let sl = gains.low * gains.low;
    let sa = sum_gain * gains.low * gains.high;
    let sb = gains.high * gains.high;
    Ok([l.map(|v| v * sl), a.map(|v| v * sa), b.map(|v| v * sb)])
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j.clamp(0, n - 1) as usize
}

/// Bilinear demosaicking of a real-valued mosaic with mirrored borders.
pub fn demosaic_bilinear(y: &Plane<f64>, phase: CfaPhase) -> Result<ColorImage> {
    let (w, h) = (y.width(), y.height());
    if w < 2 || h < 2 || w % 2 != 0 || h % 2 != 0 {
        return dim_err(format!("demosaicking needs even sides >= 2, got {w}x{h}"));
    }
    let at = |r: isize, c: isize| y.get(mirror(r, h), mirror(c, w));
    let mut out = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for r in 0..h {
        for c in 0..w {
            let (ri, ci) = (r as isize, c as isize);
            let own = phase.channel_at(r, c) as usize;
            let cross = 0.25 * (at(ri - 1, ci) + at(ri + 1, ci) + at(ri, ci - 1) + at(ri, ci + 1));
            let diag = 0.25
                * (at(ri - 1, ci - 1) + at(ri - 1, ci + 1) + at(ri + 1, ci - 1) + at(ri + 1, ci + 1));
            let horiz = 0.5 * (at(ri, ci - 1) + at(ri, ci + 1));
            let vert = 0.5 * (at(ri - 1, ci) + at(ri + 1, ci));
            let v = y.get(r, c);
            let px = match own {
                0 => [v, cross, diag],
                2 => [diag, cross, v],
                _ => {
                    // Green site: red neighbours lie along its row or its column.
                    let red_in_row = phase.channel_at(r, c ^ 1) as usize == 0;
                    if red_in_row {
                        [horiz, v, vert]
                    } else {
                        [vert, v, horiz]
                    }
                }
            };
            for (p, val) in out.iter_mut().zip(px) {
                p.set(r, c, val);
            }
        }
    }
    ColorImage::new(out, ColorSpace::Rgb)
}

/// Bilinear demosaicking of raw sample values.
pub fn demosaic_simple(y: &BayerImage) -> Result<ColorImage> {
    demosaic_bilinear(&y.samples().map(f64::from), y.phase())
}

/// Display rendering: black offset, normalisation to `[0, 1]`, bilinear
/// demosaicking, colour correction, white balance and gamma, clamped to
/// `[0, 1]`.
pub fn render(y: &BayerImage, params: &PipelineParams) -> Result<ColorImage> {
    let peak = y.peak();
    let signal = crate::cfa::subtract_black_offset(y).map(|v| v as f64 / peak);
    let rgb = demosaic_bilinear(&signal, y.phase())?;
    let cc = color_correct(&rgb, &params.color_matrix)?;
    let wb = white_balance(&cc, params.illuminant)?;
    Ok(wb.map_pixels(ColorSpace::Rgb, |p| p.map(|v| params.gamma.apply(v.clamp(0.0, 1.0)))))
}
