//! Binary range coder with adaptive probability models.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
const PROB_BITS: u32 = 22;
const PROB_ONE: u32 = 1 << PROB_BITS;
/// Keeps the 16-bit probability handed to the coder inside `[1, 65535]`.
const PROB_MARGIN: u32 = 1 << (PROB_BITS - 16);
const MAX_SHIFT: u32 = 7;

/// Adaptive estimate of `P(bit = 0)`. Adapts quickly at first, then settles
/// into an exponential window of 2^7 symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitModel {
    p0: u32,
    seen: u32,
}

impl BitModel {
    /// `p0` is the initial probability of a zero bit, clamped into (0, 1).
    pub fn new(p0: f64) -> Self {
        let p = (p0 * PROB_ONE as f64).round() as i64;
        let p = p.clamp(PROB_MARGIN as i64, (PROB_ONE - PROB_MARGIN) as i64) as u32;
        Self { p0: p, seen: 0 }
    }

    pub fn probability_of_zero(&self) -> f64 {
        self.p0 as f64 / PROB_ONE as f64
    }

    #[inline]
    fn p16(&self) -> u32 {
        self.p0 >> (PROB_BITS - 16)
    }

    #[inline]
    fn update(&mut self, bit: bool) {
        let shift = (1 + (32 - (self.seen + 1).leading_zeros() - 1)).min(MAX_SHIFT);
        if bit {
            self.p0 -= self.p0 >> shift;
        } else {
            self.p0 += (PROB_ONE - self.p0) >> shift;
        }
        self.p0 = self.p0.clamp(PROB_MARGIN, PROB_ONE - PROB_MARGIN);
        self.seen = self.seen.saturating_add(1);
    }
}

impl Default for BitModel {
    fn default() -> Self {
        Self::new(0.5)
    }
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    #[inline]
    fn encode_p16(&mut self, p16: u32, bit: bool) {
        let bound = (self.range >> 16) * p16;
        if bit {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    #[inline]
    pub fn encode(&mut self, model: &mut BitModel, bit: bool) {
        self.encode_p16(model.p16(), bit);
        model.update(bit);
    }

    /// A bit with fixed probability one half.
    #[inline]
    pub fn encode_direct(&mut self, bit: bool) {
        self.encode_p16(1 << 15, bit);
    }

    /// The low `n` bits of `value`, most significant first.
    pub fn encode_bits(&mut self, value: u32, n: u32) {
        for i in (0..n).rev() {
            self.encode_direct((value >> i) & 1 == 1);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

/// Mirrors [`RangeEncoder`]. [`RangeDecoder::finish`] checks that the input was
/// consumed exactly, which catches truncation and most corruption.
#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    overrun: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 5 {
            return Err(Error::Truncated(data.len()));
        }
        if data[0] != 0 {
            return Err(Error::Corrupt { offset: 0, reason: "range coder lead byte".into() });
        }
        let code = u32::from_be_bytes([data[1], data[2], data[3], data[4]]);
        Ok(Self { data, pos: 5, code, range: u32::MAX, overrun: 0 })
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        match self.data.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.overrun += 1;
                0
            }
        }
    }

    #[inline]
    fn decode_p16(&mut self, p16: u32) -> bool {
        let bound = (self.range >> 16) * p16;
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
        bit
    }

    #[inline]
    pub fn decode(&mut self, model: &mut BitModel) -> bool {
        let bit = self.decode_p16(model.p16());
        model.update(bit);
        bit
    }

    #[inline]
    pub fn decode_direct(&mut self) -> bool {
        self.decode_p16(1 << 15)
    }

    pub fn decode_bits(&mut self, n: u32) -> u32 {
        (0..n).fold(0, |acc, _| (acc << 1) | self.decode_direct() as u32)
    }

    /// True once reads have gone past the end of the input.
    pub fn overrun(&self) -> bool {
        self.overrun > 0
    }

    /// Offset of the next unread byte.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.overrun > 0 {
            return Err(Error::Truncated(self.data.len()));
        }
        if self.pos != self.data.len() {
            return Err(Error::Corrupt {
                offset: self.pos,
                reason: format!("{} trailing bytes", self.data.len() - self.pos),
            });
        }
        if self.code != 0 {
            return Err(Error::Corrupt { offset: self.pos, reason: "range coder final state".into() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roundtrip(bits: &[bool], p0: f64) -> usize {
        let mut enc = RangeEncoder::new();
        let mut m = BitModel::new(p0);
        for &b in bits {
            enc.encode(&mut m, b);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        let mut m = BitModel::new(p0);
        for &b in bits {
            assert_eq!(dec.decode(&mut m), b);
        }
        dec.finish().unwrap();
        bytes.len()
    }

    #[test]
    fn empty_stream() {
        assert_eq!(roundtrip(&[], 0.5), 5);
    }

    #[test]
    fn skewed_source_compresses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<bool> = (0..100_000).map(|_| rng.random_bool(0.05)).collect();
        let h = -(0.05f64 * 0.05f64.log2() + 0.95 * 0.95f64.log2());
        let bytes = roundtrip(&bits, 0.5);
        let bpb = bytes as f64 * 8.0 / bits.len() as f64;
        assert!(bpb < h * 1.05, "{bpb} vs {h}");
    }

    #[test]
    fn direct_bits_roundtrip() {
        let mut enc = RangeEncoder::new();
        enc.encode_bits(0b10110, 5);
        enc.encode_bits(0xFFFF_FFFF, 32);
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        assert_eq!(dec.decode_bits(5), 0b10110);
        assert_eq!(dec.decode_bits(32), 0xFFFF_FFFF);
        dec.finish().unwrap();
    }

    #[test]
    fn truncation_and_tampering_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.3)).collect();
        let mut enc = RangeEncoder::new();
        let mut m = BitModel::default();
        for &b in &bits {
            enc.encode(&mut m, b);
        }
        let bytes = enc.finish();
        let decode = |data: &[u8]| -> Result<Vec<bool>> {
            let mut dec = RangeDecoder::new(data)?;
            let mut m = BitModel::default();
            let out = bits.iter().map(|_| dec.decode(&mut m)).collect();
            dec.finish()?;
            Ok(out)
        };
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode(&longer).is_err());
        let mut detected = 0;
        for i in 1..bytes.len() {
            let mut t = bytes.clone();
            t[i] ^= 0x5A;
            if decode(&t).is_err() {
                detected += 1;
            }
        }
        assert!(detected as f64 >= 0.99 * (bytes.len() - 1) as f64, "{detected}/{}", bytes.len() - 1);
    }

    #[test]
    fn model_stays_in_range() {
        let mut m = BitModel::new(0.5);
        for _ in 0..10_000 {
            m.update(false);
        }
        assert!(m.p16() <= 65535 && m.p16() >= 1);
        for _ in 0..10_000 {
            m.update(true);
        }
        assert!(m.p16() >= 1);
    }
}
