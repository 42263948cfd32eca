//! Synthetic test corpus, quality metrics and rate-distortion reporting.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::cfa::{
    mosaic_values, normalize_phase, subtract_black_offset, BayerImage, BlackOffset, CfaPhase, ColorImage, ColorSpace,
};
use crate::codec::{self, EncoderConfig, MatrixChoice, Mode};
use crate::decorrelate::{
    measure_decorrelation, optimize_m, pearson, sample_pairs, sumdiff_forward, DecorrelationStats, MOptimization, MOptimizerConfig,
};
use crate::entropy::entropy_estimate;
use crate::error::{dim_err, Error, Result};
use crate::par;
use crate::pipeline::{render, Gamma, PipelineParams};
use crate::plane::Plane;
use crate::wavelet::{forward_2d, Cdf97, LeGall53};

/// Parameters of the synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub black_offset: BlackOffset,
    pub phase: CfaPhase,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            count: 32,
            width: 512,
            height: 512,
            bit_depth: 14,
            black_offset: BlackOffset([600, 600, 600]),
            phase: CfaPhase::Rggb,
        }
    }
}

/// A generated scene: the offset-free linear RGB ground truth and its mosaic.
#[derive(Clone, Debug)]
pub struct CorpusImage {
    pub id: usize,
    pub truth: ColorImage,
    pub mosaic: BayerImage,
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Sum of a few random low-frequency cosines, scaled into `[-1, 1]`.
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize, max_cycles: f64) -> Plane<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.3..1.0),
                rng.random_range(-max_cycles..max_cycles),
                rng.random_range(-max_cycles..max_cycles),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let norm: f64 = terms.iter().map(|t| t.0).sum();
    Plane::from_fn(w, h, |r, c| {
        let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
        terms
            .iter()
            .map(|&(a, fx, fy, ph)| a * (std::f64::consts::TAU * (fx * x + fy * y) + ph).cos())
            .sum::<f64>()
            / norm
    })
}

fn gaussian_blur(p: &Plane<f64>, sigma: f64) -> Plane<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / sum).collect();
    let pass = |src: &Plane<f64>| -> Plane<f64> {
        let w = src.width() as isize;
        let mut out = src.clone();
        let k = &kernel;
        par::for_each_row(out.data_mut(), src.width(), |r, row| {
            let s = src.row(r);
            for (c, o) in row.iter_mut().enumerate() {
                *o = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| {
                        let x = (c as isize + j as isize - radius).clamp(0, w - 1);
                        kv * s[x as usize]
                    })
                    .sum();
            }
        });
        out
    };
    pass(&pass(p).transpose()).transpose()
}

/// Piecewise-constant reflectance made of random rectangles and discs with
/// softened edges.
fn reflectance(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane<f64> {
    let mut p = Plane::filled(w, h, rng.random_range(0.3..1.0));
    let shapes = rng.random_range(6..14);
    for _ in 0..shapes {
        let value = rng.random_range(0.3..1.0);
        let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let (ry, rx) = (
            rng.random_range(0.03..0.25) * h as f64,
            rng.random_range(0.03..0.25) * w as f64,
        );
        let disc = rng.random_bool(0.5);
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = ((r as f64 - cy) / ry, (c as f64 - cx) / rx);
                let inside = if disc { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    p.set(r, c, value);
                }
            }
        }
    }
    gaussian_blur(&p, 1.5)
}

/// Generates one scene. Chrominance comes from a smooth per-channel tint, so
/// `α` and `β` are lowpass apart from the shared luminance edges.
pub fn generate_image(cfg: &CorpusConfig, index: usize) -> Result<CorpusImage> {
    let (w, h) = (cfg.width, cfg.height);
    if w == 0 || h == 0 || w % 2 != 0 || h % 2 != 0 {
        return dim_err(format!("corpus size {w}x{h} must be even"));
    }
    let mut rng = image_rng(cfg.seed, index);
    let illum = smooth_field(&mut rng, w, h, 1.5).map(|v| 0.08 + 0.77 * (0.5 + 0.5 * v));
    let refl = reflectance(&mut rng, w, h);
    let tint_r = rng.random_range(0.75..1.0);
    let tint_b = rng.random_range(0.40..0.55);
    let var_r = smooth_field(&mut rng, w, h, 1.0);
    let var_b = smooth_field(&mut rng, w, h, 1.0);
    let peak = ((1u32 << cfg.bit_depth) - 1) as f64;
    let max_k = cfg.black_offset.0.iter().copied().max().unwrap_or(0) as f64;
    let scale = 0.95 * (peak - max_k);
    let truth = ColorImage::new(
        [
            Plane::from_fn(w, h, |r, c| {
                scale * illum.get(r, c) * refl.get(r, c) * tint_r * (1.0 + 0.15 * var_r.get(r, c))
            }),
            Plane::from_fn(w, h, |r, c| scale * illum.get(r, c) * refl.get(r, c)),
            Plane::from_fn(w, h, |r, c| {
                scale * illum.get(r, c) * refl.get(r, c) * tint_b * (1.0 + 0.15 * var_b.get(r, c))
            }),
        ],
        ColorSpace::Rgb,
    )?;
    let clean = mosaic_values(&truth, cfg.phase)?;
    let read = Normal::new(0.0, 1.5).expect("valid sigma");
    let mut samples = Plane::<u16>::new(w, h);
    for r in 0..h {
        for c in 0..w {
            let x = clean.get(r, c);
            let shot = (0.25 * x.max(0.0)).sqrt() * read.sample(&mut rng) / 1.5;
            let k = cfg.black_offset.for_channel(cfg.phase.channel_at(r, c)) as f64;
            let v = (x + k + shot + read.sample(&mut rng)).round().clamp(0.0, peak);
            samples.set(r, c, v as u16);
        }
    }
    let mosaic = BayerImage::new(samples, cfg.bit_depth, cfg.phase, cfg.black_offset)?;
    Ok(CorpusImage { id: index, truth, mosaic })
}

/// Generates `cfg.count` scenes; identical configurations give identical corpora.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<CorpusImage>> {
    par::map_range(cfg.count, |i| generate_image(cfg, i)).into_iter().collect()
}

/// Colour correction, illuminant and gamma used for display-domain evaluation.
pub fn calibrated_pipeline() -> PipelineParams {
    PipelineParams::new(
        Matrix3::new(1.55, -0.40, -0.15, -0.20, 1.40, -0.20, 0.00, -0.35, 1.35),
        [2.0, 1.0, 1.6],
        Gamma::Srgb,
    )
    .expect("well-conditioned")
}

/// `10·log10(peak² / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() {
        return dim_err(format!("PSNR inputs differ in length ({} vs {})", a.len(), b.len()));
    }
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be > 0, got {peak}")));
    }
    if a.is_empty() {
        return dim_err("PSNR of empty inputs");
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

/// PSNR between two mosaics at the peak of their bit depth.
pub fn psnr_cfa(a: &BayerImage, b: &BayerImage) -> Result<f64> {
    let f = |y: &BayerImage| y.samples().data().iter().map(|&v| v as f64).collect::<Vec<_>>();
    psnr(&f(a), &f(b), a.peak())
}

/// PSNR between the rendered displays of two mosaics, with peak 1.
pub fn psnr_display(a: &BayerImage, b: &BayerImage, params: &PipelineParams) -> Result<f64> {
    psnr_rendered(&render(a, params)?, b, params)
}

fn psnr_rendered(reference: &ColorImage, b: &BayerImage, params: &PipelineParams) -> Result<f64> {
    let flat = |c: &ColorImage| c.planes.iter().flat_map(|p| p.data().iter().copied()).collect::<Vec<_>>();
    psnr(&flat(reference), &flat(&render(b, params)?), 1.0)
}

/// Level-1 transform kernel used for decorrelation analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    LeGall53,
    Cdf97,
}

/// Correlation and entropy of the level-1 LH/HL pair before and after
/// decorrelation. The 5/3 path uses the integer sum/difference, the 9/7 path
/// an optimised matrix (also returned).
pub fn decorrelation_stats(
    y: &BayerImage,
    kernel: Kernel,
    opt: &MOptimizerConfig,
) -> Result<(DecorrelationStats, Option<MOptimization>)> {
    let sig = normalize_phase(&subtract_black_offset(y), y.phase());
    match kernel {
        Kernel::LeGall53 => {
            let b = forward_2d(&LeGall53, &sig)?;
            let (vs, vd) = sumdiff_forward(&b.lh, &b.hl)?;
            let f = |p: &Plane<i32>| p.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
            let stats = DecorrelationStats {
                pearson_before: pearson(&f(&b.lh), &f(&b.hl))?,
                pearson_after: pearson(&f(&vs), &f(&vd))?,
                entropy_before: entropy_estimate(b.lh.data()),
                entropy_after: entropy_estimate(vd.data()),
            };
            Ok((stats, None))
        }
        Kernel::Cdf97 => {
            let b = forward_2d(&Cdf97, &sig.to_f64())?;
            let res = optimize_m(&sample_pairs(&b.lh, &b.hl, codec::DEFAULT_MAX_PAIRS), opt)?;
            let m = res.decorrelation_matrix()?.quantized()?;
            let (vs, vd) = crate::decorrelate::matrix_forward(&b.lh, &b.hl, &m)?;
            let stats = measure_decorrelation(b.lh.data(), b.hl.data(), vs.data(), vd.data())?;
            Ok((stats, Some(res)))
        }
    }
}

/// Runs the matrix optimiser on an image's level-1 9/7 coefficients.
pub fn estimate_matrix(y: &BayerImage, opt: &MOptimizerConfig) -> Result<MOptimization> {
    let sig = normalize_phase(&subtract_black_offset(y), y.phase());
    let b = forward_2d(&Cdf97, &sig.to_f64())?;
    optimize_m(&sample_pairs(&b.lh, &b.hl, codec::DEFAULT_MAX_PAIRS), opt)
}

/// One operating point of a rate-distortion sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub step: f64,
    pub bpp: f64,
    pub psnr_cfa_db: f64,
    /// Only computed when display parameters are supplied.
    pub psnr_display_db: Option<f64>,
    pub sign_bpp: f64,
}

/// Encodes and decodes `y` once per step. The decorrelation matrix is
/// optimised once and reused across steps.
pub fn rd_sweep(
    y: &BayerImage,
    mode: Mode,
    steps: &[f64],
    base: &EncoderConfig,
    display: Option<&PipelineParams>,
) -> Result<Vec<RdPoint>> {
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("steps must be sorted ascending".into()));
    }
    let cfg = resolve_config(y, base)?;
    let reference = display.map(|p| render(y, p)).transpose()?;
    steps
        .iter()
        .map(|&step| {
            let cfg = cfg.with_step(step);
            rd_point(y, mode, &cfg, reference.as_ref().zip(display))
        })
        .collect()
}

/// Replaces an `Optimize` matrix choice by the matrix it would produce, so
/// repeated encodes of the same image skip the optimiser.
pub fn resolve_config(y: &BayerImage, base: &EncoderConfig) -> Result<EncoderConfig> {
    let mut cfg = *base;
    if let MatrixChoice::Optimize(opt) = base.matrix {
        let res = estimate_matrix(y, &opt)?;
        cfg.matrix = MatrixChoice::Given {
            matrix: res.decorrelation_matrix()?,
            objective: Some(opt.objective),
            lambda: opt.lambda,
        };
    }
    Ok(cfg)
}

/// Encodes and decodes once; `display` pairs a pre-rendered reference with
/// the parameters that produced it.
pub fn rd_point(
    y: &BayerImage,
    mode: Mode,
    cfg: &EncoderConfig,
    display: Option<(&ColorImage, &PipelineParams)>,
) -> Result<RdPoint> {
    let stream = codec::encode(y, mode, cfg)?;
    let out = codec::decode(&stream.to_bytes())?;
    Ok(RdPoint {
        step: cfg.steps.ll,
        bpp: stream.bpp(),
        psnr_cfa_db: psnr_cfa(y, &out)?,
        psnr_display_db: display.map(|(r, p)| psnr_rendered(r, &out, p)).transpose()?,
        sign_bpp: stream.segment_bpp(codec::band_id::SIGN),
    })
}

/// Lossless schemes compared in the report.
pub const LOSSLESS_SCHEMES: [Mode; 5] = [Mode::Lossless, Mode::Mallat, Mode::CfaGray, Mode::Demux, Mode::Rgb];

/// Bits per pixel of a lossless scheme; fails if the round trip is not exact.
pub fn lossless_bpp(y: &BayerImage, mode: Mode) -> Result<f64> {
    let stream = codec::encode(y, mode, &EncoderConfig::default())?;
    if &codec::decode(&stream.to_bytes())? != y {
        return Err(Error::Format(format!("{} round trip is not exact", mode.name())));
    }
    Ok(stream.bpp())
}

/// One CSV row of a bench report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub image_id: String,
    pub scheme: String,
    pub mode: String,
    pub step: Option<f64>,
    pub bpp: f64,
    pub psnr_cfa_db: Option<f64>,
    pub psnr_display_db: Option<f64>,
    pub pearson_before: Option<f64>,
    pub pearson_after: Option<f64>,
    pub entropy_before: Option<f64>,
    pub entropy_after: Option<f64>,
}

/// What a bench run covers.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub corpus: CorpusConfig,
    pub steps: Vec<f64>,
    pub encoder: EncoderConfig,
    pub display: PipelineParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            steps: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            encoder: EncoderConfig::default(),
            display: calibrated_pipeline(),
        }
    }
}

fn row(image_id: &str, scheme: &str, mode: &str) -> BenchRow {
    BenchRow {
        image_id: image_id.into(),
        scheme: scheme.into(),
        mode: mode.into(),
        step: None,
        bpp: 0.0,
        psnr_cfa_db: None,
        psnr_display_db: None,
        pearson_before: None,
        pearson_after: None,
        entropy_before: None,
        entropy_after: None,
    }
}

/// Rows for one image: lossless schemes, decorrelation statistics and the
/// lossy sweeps (CAMRA encoded with the display pipeline).
pub fn bench_image(y: &BayerImage, image_id: &str, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let opt = match cfg.encoder.matrix {
        MatrixChoice::Optimize(o) => o,
        MatrixChoice::Given { .. } => MOptimizerConfig::default(),
    };
    for (kernel, name) in [(Kernel::LeGall53, "decorrelation-53"), (Kernel::Cdf97, "decorrelation-97")] {
        let (s, _) = decorrelation_stats(y, kernel, &opt)?;
        rows.push(BenchRow {
            pearson_before: Some(s.pearson_before),
            pearson_after: Some(s.pearson_after),
            entropy_before: Some(s.entropy_before),
            entropy_after: Some(s.entropy_after),
            ..row(image_id, name, "analysis")
        });
    }
    for mode in LOSSLESS_SCHEMES {
        rows.push(BenchRow { bpp: lossless_bpp(y, mode)?, ..row(image_id, mode.name(), "lossless") });
    }
    let resolved = resolve_config(y, &cfg.encoder)?;
    let reference = render(y, &cfg.display)?;
    for mode in [Mode::LossyA, Mode::LossyB, Mode::Camra] {
        let mut mcfg = resolved;
        if mode == Mode::Camra {
            mcfg.pipeline = cfg.display;
        }
        for &step in &cfg.steps {
            let p = rd_point(y, mode, &mcfg.with_step(step), Some((&reference, &cfg.display)))?;
            rows.push(BenchRow {
                step: Some(step),
                bpp: p.bpp,
                psnr_cfa_db: Some(p.psnr_cfa_db),
                psnr_display_db: p.psnr_display_db,
                ..row(image_id, mode.name(), "lossy")
            });
        }
    }
    Ok(rows)
}

/// Per-image rows for every image plus corpus-average rows (`image_id` "mean").
pub fn run_bench(images: &[(String, BayerImage)], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let per_image: Vec<Vec<BenchRow>> = par::map(images, |(id, y)| bench_image(y, id, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rows: Vec<BenchRow> = per_image.iter().flatten().cloned().collect();
    if let Some(first) = per_image.first() {
        for (i, template) in first.iter().enumerate() {
            let group: Vec<&BenchRow> = per_image.iter().map(|r| &r[i]).collect();
            let mean = |f: &dyn Fn(&BenchRow) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = group.iter().map(|r| f(r)).collect();
                v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            };
            rows.push(BenchRow {
                image_id: "mean".into(),
                bpp: mean(&|r| Some(r.bpp)).unwrap_or(0.0),
                psnr_cfa_db: mean(&|r| r.psnr_cfa_db),
                psnr_display_db: mean(&|r| r.psnr_display_db),
                pearson_before: mean(&|r| r.pearson_before),
                pearson_after: mean(&|r| r.pearson_after),
                entropy_before: mean(&|r| r.entropy_before),
                entropy_after: mean(&|r| r.entropy_after),
                ..template.clone()
            });
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig { count: 2, width: 64, height: 48, ..Default::default() }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mosaic, y.mosaic);
        }
        assert_ne!(a[0].mosaic, a[1].mosaic);
        assert!(generate_corpus(&CorpusConfig { count: 0, ..small() }).unwrap().is_empty());
        assert!(generate_image(&CorpusConfig { width: 63, ..small() }, 0).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = vec![10.0; 100];
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = vec![11.0; 100];
        assert!((psnr(&a, &b, 255.0).unwrap() - 48.1308).abs() < 1e-4);
        let c = vec![12.0; 100];
        let d = psnr(&a, &b, 255.0).unwrap() - psnr(&a, &c, 255.0).unwrap();
        assert!((d - 6.0206).abs() < 1e-4);
        assert!(psnr(&a, &c[..5], 255.0).is_err());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn sweep_rejects_unsorted_steps() {
        let img = generate_image(&small(), 0).unwrap();
        assert!(rd_sweep(&img.mosaic, Mode::LossyA, &[2.0, 1.0], &EncoderConfig::default(), None).is_err());
    }

    #[test]
    fn csv_header_matches_schema() {
        let mut buf = Vec::new();
        write_csv(&[row("0", "lossless", "lossless")], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "image_id,scheme,mode,step,bpp,psnr_cfa_db,psnr_display_db,pearson_before,pearson_after,entropy_before,entropy_after"
        );
    }
}
