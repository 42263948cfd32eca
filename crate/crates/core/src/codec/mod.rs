//! The CMRA container and its encoders.
//!
//! Every mode starts from the offset-free mosaic with its phase normalised to
//! RGGB and produces a list of integer pyramids, one per segment. The segment
//! layout is a pure function of the header, so the decoder needs nothing
//! beyond the header to split and decode the payload.

mod baseline;
mod camra;
pub mod header;

use nalgebra::Matrix3;

use crate::cfa::{add_black_offset, add_black_offset_clamped, normalize_phase, subtract_black_offset, BayerImage};
use crate::decorrelate::{
    optimize_m, sample_pairs, DecorrelatedBands, Decorrelation, DecorrelationMatrix, MOptimizerConfig,
    ObjectiveForm,
};
use crate::entropy::{decode_band, decode_sign_plane, encode_band, encode_sign_plane, BandClass, CodedSegment};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::PipelineParams;
use crate::plane::Plane;
use crate::quantize::{dequantize, quantize, QuantizationSpec};
use crate::wavelet::{
    forward_2d, inverse_2d, max_levels, packet_decompose, packet_reconstruct, Cdf97, LeGall53, Pyramid, SubbandSet,
};

pub use header::{Header, StoredPipeline};

pub const DEFAULT_LEVELS: usize = 5;
pub const DEFAULT_VD_LEVELS: usize = 2;
/// Coefficient pairs handed to the matrix optimiser per image.
pub const DEFAULT_MAX_PAIRS: usize = 32_768;

/// Segment band identifiers.
pub mod band_id {
    pub const LL: u8 = 0;
    pub const V_S: u8 = 1;
    pub const V_D: u8 = 2;
    pub const HH: u8 = 3;
    pub const SIGN: u8 = 4;
    pub const MALLAT_LH: u8 = 5;
    pub const MALLAT_HL: u8 = 6;
    pub const CFA_GRAY: u8 = 7;
    /// First of four polyphase planes.
    pub const DEMUX: u8 = 8;
    /// First of three colour planes.
    pub const RGB: u8 = 12;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Lossless = 0,
    LossyA = 1,
    LossyB = 2,
    Camra = 3,
    /// Dyadic 5/3 on the mosaic treated as a gray image.
    CfaGray = 4,
    /// Dyadic 5/3 on each of the four polyphase planes.
    Demux = 5,
    /// Level-1 5/3 with packets on all four subbands, no decorrelation.
    Mallat = 6,
    /// Bilinear demosaic, reversible colour transform, dyadic 5/3 per plane.
    Rgb = 7,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Lossless,
        Mode::LossyA,
        Mode::LossyB,
        Mode::Camra,
        Mode::CfaGray,
        Mode::Demux,
        Mode::Mallat,
        Mode::Rgb,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown mode {v}")))
    }

    pub fn is_lossy(self) -> bool {
        matches!(self, Mode::LossyA | Mode::LossyB | Mode::Camra)
    }

    pub fn segment_count(self) -> usize {
        match self {
            Mode::Camra => 5,
            Mode::CfaGray => 1,
            Mode::Rgb => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Lossless => "lossless",
            Mode::LossyA => "lossy-a",
            Mode::LossyB => "lossy-b",
            Mode::Camra => "camra",
            Mode::CfaGray => "cfa-gray",
            Mode::Demux => "demux",
            Mode::Mallat => "mallat",
            Mode::Rgb => "rgb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode {s:?}")))
    }
}

/// Where the decorrelation matrix comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixChoice {
    /// Optimise per image on subsampled level-1 coefficients.
    Optimize(MOptimizerConfig),
    /// Use a known matrix. `objective`/`lambda` are recorded in the header
    /// when the matrix came from an earlier optimisation.
    Given {
        matrix: DecorrelationMatrix,
        objective: Option<ObjectiveForm>,
        lambda: f64,
    },
}

impl MatrixChoice {
    /// The fixed sum/difference matrix `[[½, ½], [½, −½]]`.
    pub fn fixed() -> Self {
        MatrixChoice::Given {
            matrix: DecorrelationMatrix::sum_difference(),
            objective: None,
            lambda: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Packet levels on the quarter-resolution branches (reduced when the
    /// mosaic size does not allow them).
    pub levels: usize,
    /// Packet levels on `v_d`, capped at `levels`.
    pub vd_levels: usize,
    pub steps: QuantizationSpec,
    pub matrix: MatrixChoice,
    pub pipeline: PipelineParams,
    pub max_pairs: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            vd_levels: DEFAULT_VD_LEVELS,
            steps: QuantizationSpec::uniform(1.0),
            matrix: MatrixChoice::Optimize(MOptimizerConfig::default()),
            pipeline: PipelineParams::identity(),
            max_pairs: DEFAULT_MAX_PAIRS,
        }
    }
}

impl EncoderConfig {
    pub fn with_step(mut self, step: f64) -> Self {
        self.steps = QuantizationSpec::uniform(step);
        self
    }
}

/// A parsed or freshly encoded stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedStream {
    pub header: Header,
    pub segments: Vec<CodedSegment>,
}

impl CompressedStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes();
        for s in &self.segments {
            out.extend_from_slice(&s.bytes);
        }
        out
    }

    pub fn byte_len(&self) -> usize {
        self.header.to_bytes().len() + self.segments.iter().map(|s| s.bytes.len()).sum::<usize>()
    }

    fn pixels(&self) -> f64 {
        self.header.width as f64 * self.header.height as f64
    }

    /// Total stream bits per mosaic pixel, header included.
    pub fn bpp(&self) -> f64 {
        self.byte_len() as f64 * 8.0 / self.pixels()
    }

    /// Bits of the segment with `band_id` per mosaic pixel.
    pub fn segment_bpp(&self, band_id: u8) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.band_id == band_id)
            .map(|s| s.bits() as f64)
            .sum::<f64>()
            / self.pixels()
    }

    /// Splits a byte stream into header and segments without decoding them.
    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let (header, mut pos) = Header::parse(data)?;
        let mut segments = Vec::new();
        for spec in layout(&header) {
            let len = segment_len(&data[pos..]).map_err(|e| shift(e, pos))?;
            let bytes = data[pos..pos + len].to_vec();
            if bytes[0] != spec.band_id {
                return Err(Error::Corrupt { offset: pos, reason: "unexpected band id".into() });
            }
            segments.push(CodedSegment { band_id: spec.band_id, bytes, sample_count: spec.sample_count() });
            pos += len;
        }
        if pos != data.len() {
            return Err(Error::Corrupt { offset: pos, reason: "trailing bytes after last segment".into() });
        }
        Ok(Self { header, segments })
    }
}

fn segment_len(data: &[u8]) -> Result<usize> {
    if data.len() < 3 {
        return Err(Error::Truncated(data.len()));
    }
    let count = u16::from_le_bytes([data[1], data[2]]) as usize;
    let mut pos = 3;
    for _ in 0..count {
        let len = data.get(pos..pos + 4).ok_or(Error::Truncated(data.len()))?;
        pos += 4 + u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
        if pos > data.len() {
            return Err(Error::Truncated(data.len()));
        }
    }
    Ok(pos)
}

fn shift(e: Error, by: usize) -> Error {
    match e {
        Error::Corrupt { offset, reason } => Error::Corrupt { offset: offset + by, reason },
        Error::Truncated(at) => Error::Truncated(at + by),
        e => e,
    }
}

enum SegmentKind {
    Band { class: BandClass, shapes: Vec<(usize, usize)> },
    Sign { width: usize, height: usize },
}

struct SegmentSpec {
    band_id: u8,
    kind: SegmentKind,
}

impl SegmentSpec {
    fn band(band_id: u8, class: BandClass, w: usize, h: usize, levels: usize) -> Self {
        Self { band_id, kind: SegmentKind::Band { class, shapes: Pyramid::<i32>::subband_shapes(w, h, levels) } }
    }

    fn sample_count(&self) -> usize {
        match &self.kind {
            SegmentKind::Band { shapes, .. } => shapes.iter().map(|(w, h)| w * h).sum(),
            SegmentKind::Sign { width, height } => width * height,
        }
    }
}

fn layout(h: &Header) -> Vec<SegmentSpec> {
    use BandClass::{Chroma, Luma};
    let (w, ht) = (h.width as usize, h.height as usize);
    let (qw, qh) = (w / 2, ht / 2);
    let (n, nd) = (h.levels as usize, h.vd_levels as usize);
    match h.mode {
        Mode::Lossless | Mode::LossyA | Mode::LossyB | Mode::Camra => {
            let mut v = vec![
                SegmentSpec::band(band_id::LL, Luma, qw, qh, n),
                SegmentSpec::band(band_id::V_S, Chroma, qw, qh, n),
                SegmentSpec::band(band_id::V_D, Luma, qw, qh, nd),
                SegmentSpec::band(band_id::HH, Chroma, qw, qh, n),
            ];
            if h.mode == Mode::Camra {
                v.push(SegmentSpec { band_id: band_id::SIGN, kind: SegmentKind::Sign { width: qw, height: 3 * qh } });
            }
            v
        }
        Mode::Mallat => vec![
            SegmentSpec::band(band_id::LL, Luma, qw, qh, n),
            SegmentSpec::band(band_id::MALLAT_LH, Chroma, qw, qh, n),
            SegmentSpec::band(band_id::MALLAT_HL, Chroma, qw, qh, n),
            SegmentSpec::band(band_id::HH, Chroma, qw, qh, n),
        ],
        Mode::CfaGray => vec![SegmentSpec::band(band_id::CFA_GRAY, Luma, w, ht, n + 1)],
        Mode::Demux => (0..4).map(|i| SegmentSpec::band(band_id::DEMUX + i, Luma, qw, qh, n)).collect(),
        Mode::Rgb => vec![
            SegmentSpec::band(band_id::RGB, Luma, w, ht, n + 1),
            SegmentSpec::band(band_id::RGB + 1, Chroma, w, ht, n + 1),
            SegmentSpec::band(band_id::RGB + 2, Chroma, w, ht, n + 1),
        ],
    }
}

/// Integer payload of a stream: one pyramid per band segment plus the
/// CAMRA sign plane.
struct Payload {
    pyramids: Vec<Pyramid<i32>>,
    sign: Option<Plane<bool>>,
}

/// Offset-free mosaic with the phase normalised to RGGB.
fn prepare(y: &BayerImage) -> Plane<i32> {
    normalize_phase(&subtract_black_offset(y), y.phase())
}

fn finish_integer(sig: &Plane<i32>, h: &Header) -> Result<BayerImage> {
    add_black_offset(&normalize_phase(sig, h.phase), h.bit_depth, h.phase, h.black_offset)
}

fn finish_real(sig: &Plane<f64>, h: &Header) -> Result<BayerImage> {
    add_black_offset_clamped(&normalize_phase(sig, h.phase), h.bit_depth, h.phase, h.black_offset)
}

fn quantize_pyramid(p: &Pyramid<f64>, step: f64) -> Result<Pyramid<i32>> {
    Pyramid::from_subbands(p.subbands().into_iter().map(|b| quantize(b, step)).collect::<Result<_>>()?)
}

fn dequantize_pyramid(p: &Pyramid<i32>, step: f64) -> Result<Pyramid<f64>> {
    Pyramid::from_subbands(p.subbands().into_iter().map(|b| dequantize(b, step)).collect::<Result<_>>()?)
}

/// Level-1 9/7 analysis of the prepared mosaic.
fn level1_real(sig: &Plane<i32>) -> Result<SubbandSet<f64>> {
    forward_2d(&Cdf97, &sig.to_f64())
}

/// Optimises (or takes) the decorrelation matrix and rounds it to the
/// 16.16 grid stored in the header.
fn resolve_matrix(
    bands: &SubbandSet<f64>,
    choice: &MatrixChoice,
    max_pairs: usize,
) -> Result<(DecorrelationMatrix, Option<ObjectiveForm>, f64)> {
    match choice {
        MatrixChoice::Optimize(cfg) => {
            let pairs = sample_pairs(&bands.lh, &bands.hl, max_pairs);
            let res = optimize_m(&pairs, cfg)?;
            Ok((res.decorrelation_matrix()?.quantized()?, Some(cfg.objective), cfg.lambda))
        }
        MatrixChoice::Given { matrix, objective, lambda } => Ok((matrix.quantized()?, *objective, *lambda)),
    }
}

/// Encodes `y` in the given mode.
pub fn encode(y: &BayerImage, mode: Mode, cfg: &EncoderConfig) -> Result<CompressedStream> {
    let (w, h) = (y.width(), y.height());
    let levels = max_levels(w / 2, h / 2, cfg.levels.min(31));
    let vd_levels = cfg.vd_levels.min(levels);
    let mut header = Header {
        mode,
        width: u32::try_from(w).map_err(|_| Error::Dimension(format!("width {w} too large")))?,
        height: u32::try_from(h).map_err(|_| Error::Dimension(format!("height {h} too large")))?,
        bit_depth: y.bit_depth(),
        phase: y.phase(),
        black_offset: y.black_offset(),
        levels: levels as u8,
        vd_levels: vd_levels as u8,
        objective: None,
        lambda: 0.0,
        matrix: None,
        steps: vec![],
        pipeline: None,
        segment_count: mode.segment_count() as u8,
    };
    let sig = prepare(y);
    let payload = match mode {
        Mode::Lossless => encode_lossless_payload(&sig, levels, vd_levels)?,
        Mode::LossyA | Mode::LossyB | Mode::Camra => {
            cfg.steps.validate()?;
            let steps = cfg.steps.to_f32_precision();
            let bands = level1_real(&sig)?;
            let (m, objective, lambda) = resolve_matrix(&bands, &cfg.matrix, cfg.max_pairs)?;
            header.objective = objective;
            header.lambda = lambda as f32;
            header.matrix = Some(m.to_fixed());
            header.steps = steps.steps().iter().map(|&s| s as f32).collect();
            let d = DecorrelatedBands::from_real(bands, m)?;
            match mode {
                Mode::LossyA => encode_lossy_a_payload(&d, &steps, levels, vd_levels)?,
                Mode::LossyB => encode_lossy_b_payload(&d, &steps, levels, vd_levels)?,
                _ => {
                    cfg.pipeline.validate()?;
                    let params = cfg.pipeline.to_f32_precision();
                    header.pipeline = Some(camra::store_params(&params));
                    camra::encode_payload(&d, &steps, &params, y.peak(), levels, vd_levels)?
                }
            }
        }
        Mode::CfaGray => baseline::encode_cfa_gray(&sig, levels)?,
        Mode::Demux => baseline::encode_demux(&sig, levels)?,
        Mode::Mallat => baseline::encode_mallat(&sig, levels)?,
        Mode::Rgb => baseline::encode_rgb(&sig, levels)?,
    };
    let specs = layout(&header);
    let segments = code_payload(&specs, &payload)?;
    Ok(CompressedStream { header, segments })
}

fn code_payload(specs: &[SegmentSpec], payload: &Payload) -> Result<Vec<CodedSegment>> {
    let mut pyramids = payload.pyramids.iter();
    let mut jobs = Vec::with_capacity(specs.len());
    for spec in specs {
        match &spec.kind {
            SegmentKind::Band { class, shapes } => {
                let p = pyramids.next().expect("payload matches layout");
                let bands = p.subbands();
                debug_assert_eq!(bands.iter().map(|b| (b.width(), b.height())).collect::<Vec<_>>(), *shapes);
                jobs.push((spec.band_id, Some((*class, bands))));
            }
            SegmentKind::Sign { .. } => jobs.push((spec.band_id, None)),
        }
    }
    par::map(&jobs, |(id, job)| match job {
        Some((class, bands)) => encode_band(*id, bands, *class),
        None => encode_sign_plane(*id, payload.sign.as_ref().expect("CAMRA sign plane")),
    })
    .into_iter()
    .collect()
}

fn decode_payload(data: &[u8], start: usize, header: &Header) -> Result<Payload> {
    let mut pos = start;
    let mut pyramids = Vec::new();
    let mut sign = None;
    for spec in layout(header) {
        match spec.kind {
            SegmentKind::Band { class, shapes } => {
                let (bands, used) = decode_band(&data[pos..], pos, spec.band_id, &shapes, class)?;
                pyramids.push(Pyramid::from_subbands(bands)?);
                pos += used;
            }
            SegmentKind::Sign { width, height } => {
                let (plane, used) = decode_sign_plane(&data[pos..], pos, spec.band_id, width, height)?;
                sign = Some(plane);
                pos += used;
            }
        }
    }
    if pos != data.len() {
        return Err(Error::Corrupt { offset: pos, reason: "trailing bytes after last segment".into() });
    }
    Ok(Payload { pyramids, sign })
}

/// Decodes a serialised stream back to a mosaic.
pub fn decode(data: &[u8]) -> Result<BayerImage> {
    let (header, pos) = Header::parse(data)?;
    let payload = decode_payload(data, pos, &header)?;
    match header.mode {
        Mode::Lossless => finish_integer(&decode_lossless_payload(payload)?, &header),
        Mode::LossyA | Mode::LossyB | Mode::Camra => {
            let m = DecorrelationMatrix::from_fixed(header.matrix.expect("validated"))
                .map_err(|e| Error::Format(format!("stored matrix: {e}")))?;
            let s: Vec<f64> = header.steps.iter().map(|&v| v as f64).collect();
            let steps = QuantizationSpec::from_steps([s[0], s[1], s[2], s[3]])?;
            let d = match header.mode {
                Mode::LossyA => decode_lossy_a_payload(payload, &steps, m)?,
                Mode::LossyB => decode_lossy_b_payload(payload, &steps, m)?,
                _ => {
                    let params = camra::load_params(header.pipeline.as_ref().expect("validated"))?;
                    let peak = crate::cfa::max_sample(header.bit_depth) as f64;
                    camra::decode_payload(payload, &steps, &params, peak, m)?
                }
            };
            let sig = inverse_2d(&Cdf97, &d.into_subbands()?)?;
            finish_real(&sig, &header)
        }
        Mode::CfaGray => finish_integer(&baseline::decode_cfa_gray(payload)?, &header),
        Mode::Demux => finish_integer(&baseline::decode_demux(payload)?, &header),
        Mode::Mallat => finish_integer(&baseline::decode_mallat(payload)?, &header),
        Mode::Rgb => finish_integer(&baseline::decode_rgb(payload)?, &header),
    }
}

pub fn encode_lossless(y: &BayerImage) -> Result<CompressedStream> {
    encode(y, Mode::Lossless, &EncoderConfig::default())
}

fn encode_lossless_payload(sig: &Plane<i32>, n: usize, nd: usize) -> Result<Payload> {
    let d = DecorrelatedBands::from_integer(forward_2d(&LeGall53, sig)?)?;
    Ok(Payload {
        pyramids: vec![
            packet_decompose(&LeGall53, &d.ll, n)?,
            packet_decompose(&LeGall53, &d.v_s, n)?,
            packet_decompose(&LeGall53, &d.v_d, nd)?,
            packet_decompose(&LeGall53, &d.hh, n)?,
        ],
        sign: None,
    })
}

fn decode_lossless_payload(p: Payload) -> Result<Plane<i32>> {
    let [ll, v_s, v_d, hh] = reconstruct4(&LeGall53, &p.pyramids)?;
    let d = DecorrelatedBands { ll, v_s, v_d, hh, transform: Decorrelation::IntegerSumDiff };
    inverse_2d(&LeGall53, &d.into_subbands()?)
}

fn reconstruct4<K: crate::wavelet::Kernel>(k: &K, p: &[Pyramid<K::Sample>]) -> Result<[Plane<K::Sample>; 4]> {
    Ok([
        packet_reconstruct(k, &p[0])?,
        packet_reconstruct(k, &p[1])?,
        packet_reconstruct(k, &p[2])?,
        packet_reconstruct(k, &p[3])?,
    ])
}

fn encode_lossy_a_payload(
    d: &DecorrelatedBands<f64>,
    steps: &QuantizationSpec,
    n: usize,
    nd: usize,
) -> Result<Payload> {
    let branch = |band: &Plane<f64>, levels: usize, step: f64| -> Result<Pyramid<i32>> {
        quantize_pyramid(&packet_decompose(&Cdf97, band, levels)?, step)
    };
    Ok(Payload {
        pyramids: vec![
            branch(&d.ll, n, steps.ll)?,
            branch(&d.v_s, n, steps.v_s)?,
            branch(&d.v_d, nd, steps.v_d)?,
            branch(&d.hh, n, steps.hh)?,
        ],
        sign: None,
    })
}

fn decode_lossy_a_payload(
    p: Payload,
    steps: &QuantizationSpec,
    m: DecorrelationMatrix,
) -> Result<DecorrelatedBands<f64>> {
    let s = steps.steps();
    let deq = p
        .pyramids
        .iter()
        .zip(s)
        .map(|(q, step)| dequantize_pyramid(q, step))
        .collect::<Result<Vec<_>>>()?;
    let [ll, v_s, v_d, hh] = reconstruct4(&Cdf97, &deq)?;
    Ok(DecorrelatedBands { ll, v_s, v_d, hh, transform: Decorrelation::Matrix(m) })
}

fn encode_lossy_b_payload(
    d: &DecorrelatedBands<f64>,
    steps: &QuantizationSpec,
    n: usize,
    nd: usize,
) -> Result<Payload> {
    let branch = |band: &Plane<f64>, levels: usize, step: f64| -> Result<Pyramid<i32>> {
        packet_decompose(&LeGall53, &quantize(band, step)?, levels)
    };
    Ok(Payload {
        pyramids: vec![
            branch(&d.ll, n, steps.ll)?,
            branch(&d.v_s, n, steps.v_s)?,
            branch(&d.v_d, nd, steps.v_d)?,
            branch(&d.hh, n, steps.hh)?,
        ],
        sign: None,
    })
}

fn decode_lossy_b_payload(
    p: Payload,
    steps: &QuantizationSpec,
    m: DecorrelationMatrix,
) -> Result<DecorrelatedBands<f64>> {
    let [ll, v_s, v_d, hh] = reconstruct4(&LeGall53, &p.pyramids)?;
    Ok(DecorrelatedBands {
        ll: dequantize(&ll, steps.ll)?,
        v_s: dequantize(&v_s, steps.v_s)?,
        v_d: dequantize(&v_d, steps.v_d)?,
        hh: dequantize(&hh, steps.hh)?,
        transform: Decorrelation::Matrix(m),
    })
}

/// Colour-correction matrix from a row-major array.
pub fn matrix3_from_rows(v: [f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(&v)
}
