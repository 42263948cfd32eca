//! Reference lossless encoders that share the coder with the main modes.

use crate::cfa::CfaPhase;
use crate::error::{dim_err, Result};
use crate::pipeline::demosaic_bilinear;
use crate::plane::Plane;
use crate::wavelet::{forward_2d, inverse_2d, packet_decompose, packet_reconstruct, LeGall53, SubbandSet};

use super::{reconstruct4, Payload};

pub(super) fn encode_cfa_gray(sig: &Plane<i32>, n: usize) -> Result<Payload> {
    Ok(Payload { pyramids: vec![packet_decompose(&LeGall53, sig, n + 1)?], sign: None })
}

pub(super) fn decode_cfa_gray(p: Payload) -> Result<Plane<i32>> {
    packet_reconstruct(&LeGall53, &p.pyramids[0])
}

/// The four polyphase components at offsets (0,0), (0,1), (1,0), (1,1).
fn polyphase(sig: &Plane<i32>) -> [Plane<i32>; 4] {
    let (w, h) = (sig.width() / 2, sig.height() / 2);
    [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(dr, dc)| Plane::from_fn(w, h, |r, c| sig.get(2 * r + dr, 2 * c + dc)))
}

fn interleave(planes: &[Plane<i32>; 4]) -> Result<Plane<i32>> {
    let (w, h) = (planes[0].width(), planes[0].height());
    if planes.iter().any(|p| p.width() != w || p.height() != h) {
        return dim_err("polyphase planes differ in size");
    }
    Ok(Plane::from_fn(2 * w, 2 * h, |r, c| planes[(r % 2) * 2 + c % 2].get(r / 2, c / 2)))
}

pub(super) fn encode_demux(sig: &Plane<i32>, n: usize) -> Result<Payload> {
    let pyramids = polyphase(sig)
        .iter()
        .map(|p| packet_decompose(&LeGall53, p, n))
        .collect::<Result<_>>()?;
    Ok(Payload { pyramids, sign: None })
}

pub(super) fn decode_demux(p: Payload) -> Result<Plane<i32>> {
    interleave(&reconstruct4(&LeGall53, &p.pyramids)?)
}

pub(super) fn encode_mallat(sig: &Plane<i32>, n: usize) -> Result<Payload> {
    let s = forward_2d(&LeGall53, sig)?;
    Ok(Payload {
        pyramids: vec![
            packet_decompose(&LeGall53, &s.ll, n)?,
            packet_decompose(&LeGall53, &s.lh, n)?,
            packet_decompose(&LeGall53, &s.hl, n)?,
            packet_decompose(&LeGall53, &s.hh, n)?,
        ],
        sign: None,
    })
}

pub(super) fn decode_mallat(p: Payload) -> Result<Plane<i32>> {
    let [ll, lh, hl, hh] = reconstruct4(&LeGall53, &p.pyramids)?;
    inverse_2d(&LeGall53, &SubbandSet { ll, lh, hl, hh })
}

/// Reversible integer approximation of `(ℓ, 4α, 2β)`.
#[inline]
pub fn rct_forward(r: i32, g: i32, b: i32) -> (i32, i32, i32) {
    let a = r - b;
    let t = b + (a >> 1);
    let bb = t - g;
    (g + (bb >> 1), a, bb)
}

#[inline]
pub fn rct_inverse(l: i32, a: i32, bb: i32) -> (i32, i32, i32) {
    let g = l - (bb >> 1);
    let t = bb + g;
    let b = t - (a >> 1);
    (a + b, g, b)
}

pub(super) fn encode_rgb(sig: &Plane<i32>, n: usize) -> Result<Payload> {
    let rgb = demosaic_bilinear(&sig.to_f64(), CfaPhase::Rggb)?;
    let [r, g, b] = rgb.planes.map(|p| p.round_to_i32());
    let (w, h) = (sig.width(), sig.height());
    let mut planes = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for i in 0..w * h {
        let (l, a, bb) = rct_forward(r.data()[i], g.data()[i], b.data()[i]);
        planes[0].data_mut()[i] = l;
        planes[1].data_mut()[i] = a;
        planes[2].data_mut()[i] = bb;
    }
    let pyramids = planes
        .iter()
        .map(|p| packet_decompose(&LeGall53, p, n + 1))
        .collect::<Result<_>>()?;
    Ok(Payload { pyramids, sign: None })
}

pub(super) fn decode_rgb(p: Payload) -> Result<Plane<i32>> {
    let planes = p
        .pyramids
        .iter()
        .map(|q| packet_reconstruct(&LeGall53, q))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (planes[0].width(), planes[0].height());
    Ok(Plane::from_fn(w, h, |r, c| {
        let (red, green, blue) = rct_inverse(planes[0].get(r, c), planes[1].get(r, c), planes[2].get(r, c));
        match CfaPhase::Rggb.channel_at(r, c) as usize {
            0 => red,
            1 => green,
            _ => blue,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rct_roundtrip(r in -70000i32..70000, g in -70000i32..70000, b in -70000i32..70000) {
            let (l, a, bb) = rct_forward(r, g, b);
            prop_assert_eq!(rct_inverse(l, a, bb), (r, g, b));
        }
    }

    #[test]
    fn polyphase_roundtrip() {
        let p = Plane::from_fn(6, 4, |r, c| (r * 10 + c) as i32);
        assert_eq!(interleave(&polyphase(&p)).unwrap(), p);
    }
}
