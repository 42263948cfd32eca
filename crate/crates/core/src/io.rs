//! Binary PGM mosaics and the JSON metadata sidecar.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::cfa::{BayerImage, BlackOffset, CfaPhase};
use crate::error::{Error, Result};
use crate::pipeline::{Gamma, PipelineParams};
use crate::plane::Plane;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

/// Parses a binary (P5) PGM. Samples are one byte for maxval < 256,
/// otherwise two bytes big-endian. Returns the samples and maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<(Plane<u16>, u16)> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return format_err("PGM header ends early");
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return format_err("not a binary PGM (expected P5)");
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PGM {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return format_err(format!("PGM maxval {maxval} outside 1..=65535"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    if bytes.len() < start + need {
        return Err(Error::Truncated(bytes.len()));
    }
    if bytes.len() > start + need {
        return format_err("trailing bytes after PGM raster");
    }
    let raster = &bytes[start..];
    let data: Vec<u16> = if wide {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if let Some(i) = data.iter().position(|&v| v as usize > maxval) {
        return format_err(format!("PGM sample {} at index {i} exceeds maxval {maxval}", data[i]));
    }
    Ok((Plane::from_vec(width, height, data)?, maxval as u16))
}

/// Serialises samples as a P5 PGM with the given maxval.
pub fn pgm_bytes(samples: &Plane<u16>, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", samples.width(), samples.height(), maxval).into_bytes();
    if maxval > 255 {
        out.extend(samples.data().iter().flat_map(|v| v.to_be_bytes()));
    } else {
        out.extend(samples.data().iter().map(|&v| v as u8));
    }
    out
}

/// Canonical PGM of a mosaic: maxval `2^bit_depth - 1`.
pub fn mosaic_to_pgm(y: &BayerImage) -> Vec<u8> {
    pgm_bytes(y.samples(), y.max_value() as u16)
}

/// Sidecar metadata. Only `cfa_pattern` and `bit_depth` are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub cfa_pattern: String,
    pub bit_depth: u8,
    #[serde(default)]
    pub black_offset: [u16; 3],
    #[serde(default = "identity_matrix")]
    pub color_matrix: [f64; 9],
    #[serde(default = "unit_illuminant")]
    pub illuminant: [f64; 3],
    #[serde(default = "default_gamma")]
    pub gamma: String,
}

fn identity_matrix() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

fn unit_illuminant() -> [f64; 3] {
    [1.0; 3]
}

fn default_gamma() -> String {
    "srgb".into()
}

impl Metadata {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metadata: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serialises")
    }

    pub fn for_image(y: &BayerImage, params: &PipelineParams) -> Self {
        let m = params.color_matrix;
        Self {
            cfa_pattern: y.phase().to_string(),
            bit_depth: y.bit_depth(),
            black_offset: y.black_offset().0,
            color_matrix: [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            illuminant: params.illuminant,
            gamma: match params.gamma {
                Gamma::Srgb => "srgb".into(),
                Gamma::Identity => "identity".into(),
            },
        }
    }

    pub fn phase(&self) -> Result<CfaPhase> {
        self.cfa_pattern.parse()
    }

    pub fn pipeline(&self) -> Result<PipelineParams> {
        PipelineParams::new(Matrix3::from_row_slice(&self.color_matrix), self.illuminant, Gamma::parse(&self.gamma)?)
    }
}

/// Builds a mosaic from a parsed PGM and its metadata. The PGM maxval may not
/// exceed the declared bit depth.
pub fn mosaic_from_parts(samples: Plane<u16>, maxval: u16, meta: &Metadata) -> Result<BayerImage> {
    if !(8..=16).contains(&meta.bit_depth) {
        return Err(Error::BitDepth(meta.bit_depth));
    }
    let limit = ((1u32 << meta.bit_depth) - 1) as u16;
    if maxval > limit {
        return format_err(format!("PGM maxval {maxval} exceeds {}-bit range", meta.bit_depth));
    }
    BayerImage::new(samples, meta.bit_depth, meta.phase()?, BlackOffset(meta.black_offset))
}

/// Reads a PGM and its sidecar from disk.
pub fn read_mosaic(pgm: &Path, meta: &Path) -> Result<(BayerImage, Metadata)> {
    let meta = Metadata::parse(&std::fs::read_to_string(meta)?)?;
    let (samples, maxval) = parse_pgm(&std::fs::read(pgm)?)?;
    Ok((mosaic_from_parts(samples, maxval, &meta)?, meta))
}
