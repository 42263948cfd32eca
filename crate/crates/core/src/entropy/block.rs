//! Sign/magnitude bitplane coding of one code block.

use super::range::{BitModel, RangeDecoder, RangeEncoder};
use super::BandClass;
use crate::error::{Error, Result};

pub const BLOCK_SIZE: usize = 64;
/// Magnitudes must stay below `2^MAX_PLANES`.
pub const MAX_PLANES: u32 = 24;

const MODE_CODED: u8 = 0;
const MODE_RAW: u8 = 1;
const MODE_ZERO: u8 = 2;
const NBR_CLASSES: usize = 3;

struct Contexts {
    significance: Vec<BitModel>,
    refinement: Vec<BitModel>,
    sign: BitModel,
}

impl Contexts {
    fn new(class: BandClass) -> Self {
        let sig0 = match class {
            BandClass::Luma => 0.85,
            BandClass::Chroma => 0.92,
        };
        let n = MAX_PLANES as usize * NBR_CLASSES;
        Self {
            significance: vec![BitModel::new(sig0); n],
            refinement: vec![BitModel::new(0.5); n],
            sign: BitModel::new(0.5),
        }
    }
}

#[inline]
fn ctx(plane: u32, k: usize) -> usize {
    plane as usize * NBR_CLASSES + k
}

/// Significance flags with a one-sample border, so neighbour counts need no
/// bounds checks.
struct SigMap {
    w: usize,
    flags: Vec<u8>,
}

impl SigMap {
    fn new(w: usize, h: usize) -> Self {
        Self { w: w + 2, flags: vec![0; (w + 2) * (h + 2)] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        (r + 1) * self.w + c + 1
    }

    #[inline]
    fn neighbours(&self, i: usize) -> usize {
        let f = &self.flags;
        let w = self.w;
        let n = f[i - w - 1] + f[i - w] + f[i - w + 1] + f[i - 1] + f[i + 1] + f[i + w - 1] + f[i + w] + f[i + w + 1];
        (n as usize).min(2)
    }
}

fn planes_for(max_mag: u32) -> u32 {
    32 - max_mag.leading_zeros()
}

fn check_range(values: &[i32]) -> Result<u32> {
    let mut max = 0u32;
    for &v in values {
        let m = v.unsigned_abs();
        if m >= 1 << MAX_PLANES {
            return Err(Error::CoefficientRange(v as i64));
        }
        max = max.max(m);
    }
    Ok(max)
}

/// Encodes a `w`×`h` block stored row-major in `values`.
pub fn encode_block(values: &[i32], w: usize, h: usize, class: BandClass) -> Result<Vec<u8>> {
    debug_assert_eq!(values.len(), w * h);
    let max = check_range(values)?;
    if max == 0 {
        return Ok(vec![MODE_ZERO]);
    }
    let planes = planes_for(max);
    let coded = encode_bitplanes(values, w, h, planes, class);
    let raw_len = 2 + (values.len() * (planes as usize + 1)).div_ceil(8);
    if coded.len() + 1 > raw_len {
        Ok(encode_raw(values, planes))
    } else {
        let mut out = Vec::with_capacity(coded.len() + 1);
        out.push(MODE_CODED);
        out.extend_from_slice(&coded);
        Ok(out)
    }
}

fn encode_bitplanes(values: &[i32], w: usize, h: usize, planes: u32, class: BandClass) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    enc.encode_bits(planes - 1, 5);
    let mut cx = Contexts::new(class);
    let mut sig = SigMap::new(w, h);
    let mut msb = vec![0u8; values.len()];
    for p in (0..planes).rev() {
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                let mag = values[k].unsigned_abs();
                let bit = (mag >> p) & 1 == 1;
                let si = sig.idx(r, c);
                if sig.flags[si] == 0 {
                    let n = sig.neighbours(si);
                    enc.encode(&mut cx.significance[ctx(p, n)], bit);
                    if bit {
                        sig.flags[si] = 1;
                        msb[k] = p as u8;
                        enc.encode(&mut cx.sign, values[k] < 0);
                    }
                } else {
                    let d = (msb[k] as u32 - p - 1).min(2) as usize;
                    enc.encode(&mut cx.refinement[ctx(p, d)], bit);
                }
            }
        }
    }
    enc.finish()
}

fn encode_raw(values: &[i32], planes: u32) -> Vec<u8> {
    let mut out = vec![MODE_RAW, planes as u8];
    let mut acc = 0u64;
    let mut nbits = 0u32;
    let width = planes + 1;
    for &v in values {
        let word = ((v < 0) as u64) << planes | v.unsigned_abs() as u64;
        acc = (acc << width) | word;
        nbits += width;
        while nbits >= 8 {
            nbits -= 8;
            out.push((acc >> nbits) as u8);
        }
        acc &= (1 << nbits) - 1;
    }
    if nbits > 0 {
        out.push((acc << (8 - nbits)) as u8);
    }
    out
}

fn corrupt(offset: usize, reason: &str) -> Error {
    Error::Corrupt { offset, reason: reason.into() }
}

/// Decodes a block produced by [`encode_block`]. Error offsets are relative
/// to the start of `data`.
pub fn decode_block(data: &[u8], w: usize, h: usize, class: BandClass) -> Result<Vec<i32>> {
    let Some(&mode) = data.first() else {
        return Err(Error::Truncated(0));
    };
    match mode {
        MODE_ZERO => {
            if data.len() != 1 {
                return Err(corrupt(1, "data after all-zero block"));
            }
            Ok(vec![0; w * h])
        }
        MODE_RAW => decode_raw(data, w * h),
        MODE_CODED => decode_bitplanes(&data[1..], w, h, class).map_err(|e| shift_offset(e, 1)),
        _ => Err(corrupt(0, "unknown block mode")),
    }
}

fn shift_offset(e: Error, by: usize) -> Error {
    match e {
        Error::Corrupt { offset, reason } => Error::Corrupt { offset: offset + by, reason },
        Error::Truncated(at) => Error::Truncated(at + by),
        e => e,
    }
}

fn decode_bitplanes(data: &[u8], w: usize, h: usize, class: BandClass) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(data)?;
    let planes = dec.decode_bits(5) + 1;
    if planes > MAX_PLANES {
        return Err(corrupt(dec.position(), "bitplane count out of range"));
    }
    let mut cx = Contexts::new(class);
    let mut sig = SigMap::new(w, h);
    let mut msb = vec![0u8; w * h];
    let mut mags = vec![0u32; w * h];
    let mut neg = vec![false; w * h];
    for p in (0..planes).rev() {
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                let si = sig.idx(r, c);
                if sig.flags[si] == 0 {
                    let n = sig.neighbours(si);
                    if dec.decode(&mut cx.significance[ctx(p, n)]) {
                        sig.flags[si] = 1;
                        msb[k] = p as u8;
                        mags[k] = 1 << p;
                        neg[k] = dec.decode(&mut cx.sign);
                    }
                } else {
                    let d = (msb[k] as u32 - p - 1).min(2) as usize;
                    if dec.decode(&mut cx.refinement[ctx(p, d)]) {
                        mags[k] |= 1 << p;
                    }
                }
            }
            if dec.overrun() {
                return Err(Error::Truncated(data.len()));
            }
        }
    }
    dec.finish()?;
    Ok(mags
        .iter()
        .zip(&neg)
        .map(|(&m, &s)| if s { -(m as i32) } else { m as i32 })
        .collect())
}

fn decode_raw(data: &[u8], n: usize) -> Result<Vec<i32>> {
    let Some(&planes) = data.get(1) else {
        return Err(Error::Truncated(data.len()));
    };
    let planes = planes as u32;
    if planes == 0 || planes > MAX_PLANES {
        return Err(corrupt(1, "bitplane count out of range"));
    }
    let width = planes + 1;
    let expected = 2 + (n * width as usize).div_ceil(8);
    if data.len() < expected {
        return Err(Error::Truncated(data.len()));
    }
    if data.len() > expected {
        return Err(corrupt(expected, "data after raw block"));
    }
    let mut out = Vec::with_capacity(n);
    let mut acc = 0u64;
    let mut nbits = 0u32;
    let mut bytes = data[2..].iter();
    for _ in 0..n {
        while nbits < width {
            acc = (acc << 8) | *bytes.next().expect("length checked") as u64;
            nbits += 8;
        }
        nbits -= width;
        let word = (acc >> nbits) as u32 & ((1 << width) - 1);
        acc &= (1 << nbits) - 1;
        let mag = (word & ((1 << planes) - 1)) as i32;
        out.push(if word >> planes == 1 { -mag } else { mag });
    }
    Ok(out)
}
