//! Pipeline-aware coding of the quarter-resolution colour image carried by
//! the level-1 bands `(w_LL, v_s, w_HH)`.
//!
//! The bands are mapped to RGB, normalised, colour corrected and white
//! balanced. Negative values are split off into a sign plane before the
//! gamma curve is applied to the magnitudes; the result is mapped back to
//! band form and coded like the plain lossy mode. `v_d` is left untouched.

use nalgebra::Matrix3;

use crate::cfa::{ColorImage, ColorSpace};
use crate::decorrelate::{DecorrelatedBands, Decorrelation, DecorrelationMatrix};
use crate::error::{dim_err, Result};
use crate::pipeline::{
    bands_from_quarter_rgb, color_correct, color_correct_inverse, quarter_rgb_from_bands, recombine,
    split_magnitude_sign, white_balance, white_balance_inverse, BandGains, PipelineParams, SignSplit,
};
use crate::plane::Plane;
use crate::quantize::QuantizationSpec;
use crate::wavelet::{packet_decompose, packet_reconstruct, Cdf97};

use super::{dequantize_pyramid, quantize_pyramid, Payload, StoredPipeline};

pub(super) fn store_params(p: &PipelineParams) -> StoredPipeline {
    let a = p.color_matrix;
    let mut m = [0f32; 9];
    for r in 0..3 {
        for c in 0..3 {
            m[3 * r + c] = a[(r, c)] as f32;
        }
    }
    StoredPipeline {
        color_matrix: m,
        illuminant: p.illuminant.map(|v| v as f32),
        gamma: p.gamma,
    }
}

pub(super) fn load_params(s: &StoredPipeline) -> Result<PipelineParams> {
    let m = s.color_matrix.map(f64::from);
    PipelineParams::new(Matrix3::from_row_slice(&m), s.illuminant.map(f64::from), s.gamma)
        .map_err(|e| crate::Error::Format(format!("stored pipeline: {e}")))
}

fn scale(x: &ColorImage, k: f64) -> ColorImage {
    x.map_pixels(x.space, |p| p.map(|v| v * k))
}

/// `(w_LL, v_s, w_HH)` → display-domain bands and the stacked sign planes.
pub(super) fn to_display(
    d: &DecorrelatedBands<f64>,
    params: &PipelineParams,
    peak: f64,
) -> Result<([Plane<f64>; 3], Plane<bool>)> {
    let gains = BandGains::cdf97();
    let sg = d.transform.sum_gain();
    let rgb = quarter_rgb_from_bands(&d.ll, &d.v_s, &d.hh, gains, sg)?;
    let cc = color_correct(&scale(&rgb, 1.0 / peak), &params.color_matrix)?;
    let wb = white_balance(&cc, params.illuminant)?;
    let SignSplit { magnitude, negative } = split_magnitude_sign(&wb);
    let g = params.gamma;
    let shown = magnitude.map_pixels(ColorSpace::Rgb, |p| p.map(|v| g.apply(v) * peak));
    let bands = bands_from_quarter_rgb(&shown, gains, sg)?;
    Ok((bands, stack(&negative)))
}

/// Inverse of [`to_display`].
pub(super) fn from_display(
    bands: &[Plane<f64>; 3],
    negative: &Plane<bool>,
    params: &PipelineParams,
    peak: f64,
    sum_gain: f64,
) -> Result<[Plane<f64>; 3]> {
    let gains = BandGains::cdf97();
    let shown = quarter_rgb_from_bands(&bands[0], &bands[1], &bands[2], gains, sum_gain)?;
    let g = params.gamma;
    // Quantisation noise can push small magnitudes below zero; invert the
    // curve as an odd function.
    let magnitude = shown.map_pixels(ColorSpace::Rgb, |p| {
        p.map(|v| {
            let m = g.invert(v.abs() / peak);
            if v < 0.0 { -m } else { m }
        })
    });
    let negative = unstack(negative, bands[0].width(), bands[0].height())?;
    let wb = recombine(&SignSplit { magnitude, negative })?;
    let cc = white_balance_inverse(&wb, params.illuminant)?;
    let rgb = scale(&color_correct_inverse(&cc, &params.color_matrix)?, peak);
    bands_from_quarter_rgb(&rgb, gains, sum_gain)
}

fn stack(planes: &[Plane<bool>; 3]) -> Plane<bool> {
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut out = Plane::new(w, 3 * h);
    for (i, p) in planes.iter().enumerate() {
        out.paste(i * h, 0, p);
    }
    out
}

fn unstack(p: &Plane<bool>, w: usize, h: usize) -> Result<[Plane<bool>; 3]> {
    if p.width() != w || p.height() != 3 * h {
        return dim_err("sign plane does not match the quarter-resolution bands");
    }
    Ok([0, 1, 2].map(|i| p.crop(i * h, 0, w, h)))
}

pub(super) fn encode_payload(
    d: &DecorrelatedBands<f64>,
    steps: &QuantizationSpec,
    params: &PipelineParams,
    peak: f64,
    n: usize,
    nd: usize,
) -> Result<Payload> {
    let ([ll, v_s, hh], sign) = to_display(d, params, peak)?;
    let branch = |band: &Plane<f64>, levels: usize, step: f64| -> Result<_> {
        quantize_pyramid(&packet_decompose(&Cdf97, band, levels)?, step)
    };
    Ok(Payload {
        pyramids: vec![
            branch(&ll, n, steps.ll)?,
            branch(&v_s, n, steps.v_s)?,
            branch(&d.v_d, nd, steps.v_d)?,
            branch(&hh, n, steps.hh)?,
        ],
        sign: Some(sign),
    })
}

pub(super) fn decode_payload(
    p: Payload,
    steps: &QuantizationSpec,
    params: &PipelineParams,
    peak: f64,
    m: DecorrelationMatrix,
) -> Result<DecorrelatedBands<f64>> {
    let s = steps.steps();
    let mut bands = Vec::with_capacity(4);
    for (q, step) in p.pyramids.iter().zip(s) {
        bands.push(packet_reconstruct(&Cdf97, &dequantize_pyramid(q, step)?)?);
    }
    let [ll, v_s, v_d, hh]: [Plane<f64>; 4] = bands.try_into().expect("four branches");
    let sign = p.sign.expect("layout includes the sign plane");
    let [ll, v_s, hh] = from_display(&[ll, v_s, hh], &sign, params, peak, m.sum_gain())?;
    Ok(DecorrelatedBands { ll, v_s, v_d, hh, transform: Decorrelation::Matrix(m) })
}
