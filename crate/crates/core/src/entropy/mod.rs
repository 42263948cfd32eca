//! Lossless coding of integer subband grids.
//!
//! Grids are tiled into 64×64 blocks, each coded independently by a
//! bitplane coder driving an adaptive binary range coder. A segment is
//! `band id (u8) | block count (u16) | (length u32, payload)*`, little-endian.

mod block;
mod range;

use std::collections::HashMap;

pub use block::{decode_block, encode_block, BLOCK_SIZE, MAX_PLANES};
pub use range::{BitModel, RangeDecoder, RangeEncoder};

use crate::error::{Error, Result};
use crate::par;
use crate::plane::Plane;

/// Selects the initial context priors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BandClass {
    Luma,
    Chroma,
}

/// A serialised segment and the number of samples it carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedSegment {
    pub band_id: u8,
    pub bytes: Vec<u8>,
    pub sample_count: usize,
}

impl CodedSegment {
    pub fn bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn bits_per_sample(&self) -> f64 {
        if self.sample_count == 0 {
            0.0
        } else {
            self.bits() as f64 / self.sample_count as f64
        }
    }
}

/// Order-0 Shannon entropy of the value histogram, in bits per sample.
pub fn entropy_estimate(values: &[i32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut hist: HashMap<i32, usize> = HashMap::new();
    for &v in values {
        *hist.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    hist.values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Block rectangles `(row, col, w, h)` covering a `w`×`h` grid.
fn tiles(w: usize, h: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for r in (0..h).step_by(BLOCK_SIZE) {
        for c in (0..w).step_by(BLOCK_SIZE) {
            out.push((r, c, BLOCK_SIZE.min(w - c), BLOCK_SIZE.min(h - r)));
        }
    }
    out
}

fn write_segment(band_id: u8, blocks: &[Vec<u8>], sample_count: usize) -> Result<CodedSegment> {
    let count = u16::try_from(blocks.len())
        .map_err(|_| Error::Dimension(format!("{} blocks exceed a segment", blocks.len())))?;
    let mut bytes = Vec::with_capacity(3 + blocks.iter().map(|b| b.len() + 4).sum::<usize>());
    bytes.push(band_id);
    bytes.extend_from_slice(&count.to_le_bytes());
    for b in blocks {
        bytes.extend_from_slice(&(b.len() as u32).to_le_bytes());
        bytes.extend_from_slice(b);
    }
    Ok(CodedSegment { band_id, bytes, sample_count })
}

struct SegmentView<'a> {
    band_id: u8,
    /// Block payloads with their offsets relative to the segment start.
    blocks: Vec<(usize, &'a [u8])>,
    len: usize,
}

fn read_segment(data: &[u8]) -> Result<SegmentView<'_>> {
    if data.len() < 3 {
        return Err(Error::Truncated(data.len()));
    }
    let band_id = data[0];
    let count = u16::from_le_bytes([data[1], data[2]]) as usize;
    let mut pos = 3;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let Some(len) = data.get(pos..pos + 4) else {
            return Err(Error::Truncated(data.len()));
        };
        let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
        pos += 4;
        let Some(payload) = data.get(pos..pos + len) else {
            return Err(Error::Truncated(data.len()));
        };
        blocks.push((pos, payload));
        pos += len;
    }
    Ok(SegmentView { band_id, blocks, len: pos })
}

fn offset_by(e: Error, by: usize) -> Error {
    match e {
        Error::Corrupt { offset, reason } => Error::Corrupt { offset: offset + by, reason },
        Error::Truncated(at) => Error::Truncated(at + by),
        e => e,
    }
}

/// Codes a list of grids into one segment, block by block in list order.
pub fn encode_band(band_id: u8, grids: &[&Plane<i32>], class: BandClass) -> Result<CodedSegment> {
    let mut jobs = Vec::new();
    for g in grids {
        for t in tiles(g.width(), g.height()) {
            jobs.push((*g, t));
        }
    }
    let blocks = par::map(&jobs, |&(g, (r, c, w, h))| {
        let tile = g.crop(r, c, w, h);
        encode_block(tile.data(), w, h, class)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let samples = grids.iter().map(|g| g.len()).sum();
    write_segment(band_id, &blocks, samples)
}

/// Decodes a segment at the start of `data` into grids of the given
/// `(width, height)` shapes. Returns the grids and the bytes consumed.
/// `base` is added to error offsets.
pub fn decode_band(
    data: &[u8],
    base: usize,
    expected_id: u8,
    shapes: &[(usize, usize)],
    class: BandClass,
) -> Result<(Vec<Plane<i32>>, usize)> {
    let seg = read_segment(data).map_err(|e| offset_by(e, base))?;
    if seg.band_id != expected_id {
        return Err(Error::Corrupt {
            offset: base,
            reason: format!("expected band {expected_id}, found {}", seg.band_id),
        });
    }
    let mut jobs = Vec::new();
    for (gi, &(w, h)) in shapes.iter().enumerate() {
        for t in tiles(w, h) {
            jobs.push((gi, t));
        }
    }
    if jobs.len() != seg.blocks.len() {
        return Err(Error::Corrupt {
            offset: base + 1,
            reason: format!("expected {} blocks, found {}", jobs.len(), seg.blocks.len()),
        });
    }
    let decoded = par::map_range(jobs.len(), |i| {
        let (off, payload) = seg.blocks[i];
        let (_, (_, _, w, h)) = jobs[i];
        decode_block(payload, w, h, class).map_err(|e| offset_by(e, base + off))
    });
    let mut grids: Vec<Plane<i32>> = shapes.iter().map(|&(w, h)| Plane::new(w, h)).collect();
    for (&(gi, (r, c, w, h)), values) in jobs.iter().zip(decoded) {
        let tile = Plane::from_vec(w, h, values?)?;
        grids[gi].paste(r, c, &tile);
    }
    Ok((grids, seg.len))
}

const SIGN_CODED: u8 = 0;
const SIGN_EMPTY: u8 = 2;

/// Codes a binary grid with a single adaptive context.
pub fn encode_sign_plane(band_id: u8, bits: &Plane<bool>) -> Result<CodedSegment> {
    let payload = if bits.data().iter().any(|&b| b) {
        let mut enc = RangeEncoder::new();
        let mut model = BitModel::default();
        for &b in bits.data() {
            enc.encode(&mut model, b);
        }
        let mut p = vec![SIGN_CODED];
        p.extend(enc.finish());
        p
    } else {
        vec![SIGN_EMPTY]
    };
    write_segment(band_id, &[payload], bits.len())
}

pub fn decode_sign_plane(
    data: &[u8],
    base: usize,
    expected_id: u8,
    width: usize,
    height: usize,
) -> Result<(Plane<bool>, usize)> {
    let seg = read_segment(data).map_err(|e| offset_by(e, base))?;
    if seg.band_id != expected_id || seg.blocks.len() != 1 {
        return Err(Error::Corrupt { offset: base, reason: "malformed sign-plane segment".into() });
    }
    let (off, payload) = seg.blocks[0];
    let at = |e: Error| offset_by(e, base + off);
    let plane = match payload.first() {
        None => return Err(Error::Truncated(base + off)),
        Some(&SIGN_EMPTY) if payload.len() == 1 => Plane::new(width, height),
        Some(&SIGN_CODED) => {
            let mut dec = RangeDecoder::new(&payload[1..]).map_err(|e| at(offset_by(e, 1)))?;
            let mut model = BitModel::default();
            let mut v = Vec::with_capacity(width * height);
            for _ in 0..width * height {
                v.push(dec.decode(&mut model));
            }
            dec.finish().map_err(|e| at(offset_by(e, 1)))?;
            Plane::from_vec(width, height, v)?
        }
        Some(_) => return Err(Error::Corrupt { offset: base + off, reason: "unknown sign-plane mode".into() }),
    };
    Ok((plane, seg.len))
}
