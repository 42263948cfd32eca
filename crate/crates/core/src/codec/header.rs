//! Stream header serialisation. All fields are little-endian.

use crate::cfa::{BlackOffset, CfaPhase};
use crate::decorrelate::ObjectiveForm;
use crate::error::{Error, Result};
use crate::pipeline::Gamma;

use super::Mode;

pub const MAGIC: [u8; 4] = *b"CMRA";
pub const VERSION: u8 = 1;
const NO_OBJECTIVE: u8 = 0xFF;

/// Pipeline parameters as stored in a CAMRA stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoredPipeline {
    /// Row-major colour-correction matrix.
    pub color_matrix: [f32; 9],
    pub illuminant: [f32; 3],
    pub gamma: Gamma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub mode: Mode,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub phase: CfaPhase,
    pub black_offset: BlackOffset,
    /// Packet levels applied to the quarter-resolution branches.
    pub levels: u8,
    /// Packet levels applied to the `v_d` branch.
    pub vd_levels: u8,
    /// How the decorrelation matrix was optimised; `None` when it was given.
    pub objective: Option<ObjectiveForm>,
    pub lambda: f32,
    /// 16.16 fixed-point decorrelation matrix, row-major (lossy modes only).
    pub matrix: Option<[i32; 4]>,
    /// Quantiser steps `[ll, v_s, v_d, hh]` (lossy modes only).
    pub steps: Vec<f32>,
    pub pipeline: Option<StoredPipeline>,
    pub segment_count: u8,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let bytes = self
            .data
            .get(self.pos..self.pos + N)
            .ok_or(Error::Truncated(self.data.len()))?;
        self.pos += N;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl Header {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.mode as u8);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.bit_depth);
        out.push(self.phase as u8);
        for k in self.black_offset.0 {
            out.extend_from_slice(&k.to_le_bytes());
        }
        out.push(self.levels);
        out.push(self.vd_levels);
        out.push(self.objective.map_or(NO_OBJECTIVE, |o| o as u8));
        out.extend_from_slice(&self.lambda.to_le_bytes());
        if let Some(m) = self.matrix {
            for v in m {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.push(self.steps.len() as u8);
        for s in &self.steps {
            out.extend_from_slice(&s.to_le_bytes());
        }
        if let Some(p) = &self.pipeline {
            for v in p.color_matrix.iter().chain(&p.illuminant) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(p.gamma as u8);
        }
        out.push(self.segment_count);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    /// Parses a header, returning it and the number of bytes consumed.
    pub fn parse(data: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { data, pos: 0 };
        if r.take::<4>()? != MAGIC {
            return format_err("not a CMRA stream");
        }
        let version = r.u8()?;
        if version != VERSION {
            return format_err(format!("unsupported version {version}"));
        }
        let mode = Mode::from_u8(r.u8()?)?;
        let width = r.u32()?;
        let height = r.u32()?;
        let bit_depth = r.u8()?;
        let phase = CfaPhase::from_u8(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
        let black_offset = BlackOffset([r.u16()?, r.u16()?, r.u16()?]);
        let levels = r.u8()?;
        let vd_levels = r.u8()?;
        let objective = match r.u8()? {
            NO_OBJECTIVE => None,
            v => Some(ObjectiveForm::from_u8(v)?),
        };
        let lambda = r.f32()?;
        let matrix = if mode.is_lossy() {
            Some([r.i32()?, r.i32()?, r.i32()?, r.i32()?])
        } else {
            None
        };
        let n_steps = r.u8()?;
        let steps = (0..n_steps).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let pipeline = if mode == Mode::Camra {
            let mut color_matrix = [0f32; 9];
            for v in &mut color_matrix {
                *v = r.f32()?;
            }
            let illuminant = [r.f32()?, r.f32()?, r.f32()?];
            let gamma = Gamma::from_u8(r.u8()?)?;
            Some(StoredPipeline { color_matrix, illuminant, gamma })
        } else {
            None
        };
        let segment_count = r.u8()?;
        let h = Header {
            mode,
            width,
            height,
            bit_depth,
            phase,
            black_offset,
            levels,
            vd_levels,
            objective,
            lambda,
            matrix,
            steps,
            pipeline,
            segment_count,
        };
        h.validate()?;
        Ok((h, r.pos))
    }

    /// Checks internal consistency; the decode path relies on it.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return format_err(format!("invalid dimensions {}x{}", self.width, self.height));
        }
        if !(8..=16).contains(&self.bit_depth) {
            return format_err(format!("invalid bit depth {}", self.bit_depth));
        }
        let feasible = crate::wavelet::max_levels(self.width as usize / 2, self.height as usize / 2, 31);
        if self.levels as usize > feasible || self.vd_levels > self.levels {
            return format_err(format!(
                "{} / {} packet levels do not fit a {}x{} mosaic",
                self.levels, self.vd_levels, self.width, self.height
            ));
        }
        if self.mode.is_lossy() != self.matrix.is_some() {
            return format_err("decorrelation matrix presence does not match the mode");
        }
        let want_steps = if self.mode.is_lossy() { 4 } else { 0 };
        if self.steps.len() != want_steps {
            return format_err(format!("expected {want_steps} quantiser steps, found {}", self.steps.len()));
        }
        if self.steps.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return format_err("quantiser steps must be positive");
        }
        if (self.mode == Mode::Camra) != self.pipeline.is_some() {
            return format_err("pipeline parameters present only in CAMRA streams");
        }
        if self.segment_count as usize != self.mode.segment_count() {
            return format_err(format!(
                "mode {:?} has {} segments, header declares {}",
                self.mode,
                self.mode.segment_count(),
                self.segment_count
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_header() -> impl Strategy<Value = Header> {
        (
            0u8..8,
            (1u32..4096, 1u32..4096),
            8u8..=16,
            0u8..4,
            any::<[u16; 3]>(),
            (0u8..6, 0u8..6),
            (prop::option::of(0u8..2), any::<f32>()),
            (any::<[i32; 4]>(), prop::array::uniform4(1e-6f32..1e4)),
            (any::<[f32; 9]>(), prop::array::uniform3(1e-3f32..10.0), 0u8..2),
        )
            .prop_map(|(mode, (w, h), bd, ph, k, (n, nd), (obj, lambda), (m, steps), (a, i, g))| {
                let mode = Mode::from_u8(mode).unwrap();
                let (width, height) = (w * 64, h * 2);
                let feasible = crate::wavelet::max_levels(width as usize / 2, height as usize / 2, 31) as u8;
                let levels = n.min(feasible);
                Header {
                    mode,
                    width,
                    height,
                    bit_depth: bd,
                    phase: CfaPhase::from_u8(ph).unwrap(),
                    black_offset: BlackOffset(k),
                    levels,
                    vd_levels: nd.min(levels),
                    objective: obj.map(|o| ObjectiveForm::from_u8(o).unwrap()),
                    lambda,
                    matrix: mode.is_lossy().then_some(m),
                    steps: if mode.is_lossy() { steps.to_vec() } else { vec![] },
                    pipeline: (mode == Mode::Camra).then(|| StoredPipeline {
                        color_matrix: a,
                        illuminant: i,
                        gamma: Gamma::from_u8(g).unwrap(),
                    }),
                    segment_count: mode.segment_count() as u8,
                }
            })
    }

    proptest! {
        #[test]
        fn header_roundtrip(h in arb_header()) {
            let bytes = h.to_bytes();
            let (p, used) = Header::parse(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            // Compare bitwise so NaN payloads count as equal.
            prop_assert_eq!(p.to_bytes(), bytes);
            prop_assert_eq!(p.lambda.to_bits(), h.lambda.to_bits());
        }

        #[test]
        fn truncated_header_rejected(h in arb_header(), cut in 0usize..64) {
            let bytes = h.to_bytes();
            let cut = cut.min(bytes.len() - 1);
            prop_assert!(Header::parse(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn bad_magic_and_version() {
        assert!(matches!(Header::parse(b"JUNKJUNKJUNK"), Err(Error::Format(_))));
        let mut b = MAGIC.to_vec();
        b.push(9);
        assert!(matches!(Header::parse(&b), Err(Error::Format(_))));
    }
}
