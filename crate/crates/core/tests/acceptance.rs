//! End-to-end acceptance checks on the seeded synthetic corpus. Runs as a
//! single test so the timing check is not skewed by concurrent tests; prints
//! one PASS/FAIL line per criterion and fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use camra::bench::{
    self, calibrated_pipeline, decorrelation_stats, estimate_matrix, generate_corpus, rd_point, resolve_config,
    CorpusConfig, CorpusImage, Kernel, RdPoint,
};
use camra::cfa::{BayerImage, BlackOffset, CfaPhase};
use camra::codec::{self, EncoderConfig, Mode};
use camra::decorrelate::{sumdiff_inverse_px, sumdiff_px, MOptimizerConfig};
use camra::instrument;
use camra::pipeline::render;
use camra::plane::Plane;
use camra::wavelet::{forward_2d, LeGall53};

const STEPS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
const NEAR_LOSSLESS_STEP: f64 = 1.0 / 64.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Linear interpolation of `y` at `x` on a curve sorted by decreasing `x`.
fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    let i = curve
        .windows(2)
        .position(|w| x <= w[0].0 && x >= w[1].0)
        .unwrap_or(if x > curve[0].0 { 0 } else { curve.len() - 2 });
    let ((x0, y0), (x1, y1)) = (curve[i], curve[i + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn random_mosaic(rng: &mut ChaCha8Rng, i: usize) -> BayerImage {
    let phase = CfaPhase::ALL[i % 4];
    let bit_depth = [10u8, 12, 14, 16][(i / 4) % 4];
    let max = (1u32 << bit_depth) - 1;
    let (w, h) = (2 * rng.random_range(1..=40), 2 * rng.random_range(1..=40));
    let samples = match i % 3 {
        0 => Plane::from_fn(w, h, |_, _| rng.random_range(0..=max) as u16),
        1 => {
            let (gx, gy) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            Plane::from_fn(w, h, |r, c| {
                let v = max as f64 * (gx * c as f64 / w as f64 + gy * r as f64 / h as f64) / 2.0;
                (v + rng.random_range(-20.0..20.0)).clamp(0.0, max as f64) as u16
            })
        }
        _ => Plane::from_fn(w, h, |_, _| if rng.random_bool(0.05) { max as u16 } else { 0 }),
    };
    let mut k = || rng.random_range(0..=max.min(1024)) as u16;
    let offsets = BlackOffset([k(), k(), k()]);
    BayerImage::new(samples, bit_depth, phase, offsets).expect("valid mosaic")
}

fn lossless_round_trip(corpus: &[CorpusImage]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    for i in 0..200 {
        let y = random_mosaic(&mut rng, i);
        let ok = codec::encode(&y, Mode::Lossless, &EncoderConfig::default())
            .and_then(|s| codec::decode(&s.to_bytes()))
            .is_ok_and(|d| d == y);
        failures += usize::from(!ok);
    }
    let (mut enc, mut dec, mut pixels) = (0.0, 0.0, 0usize);
    for img in corpus {
        let t = Instant::now();
        let stream = codec::encode_lossless(&img.mosaic).expect("encode").to_bytes();
        enc += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let back = codec::decode(&stream).expect("decode");
        dec += t.elapsed().as_secs_f64();
        failures += usize::from(back != img.mosaic);
        pixels += img.mosaic.pixel_count();
    }
    let mp = pixels as f64 / 1e6;
    let (enc, dec) = (enc / mp, dec / mp);
    outcome(
        failures == 0 && enc < 2.0 && dec < 2.0,
        format!("{failures} mismatches over 200 random + {} corpus mosaics; encode {enc:.3} s/MP, decode {dec:.3} s/MP", corpus.len()),
    )
}

struct StatsSummary {
    before_53: f64,
    after_53: f64,
    before_97: f64,
    after_97: f64,
    entropy_lh_53: f64,
    entropy_vd_53: f64,
    entropy_lh_97: f64,
    entropy_vd_97: f64,
}

fn decorrelation_summary(corpus: &[CorpusImage]) -> StatsSummary {
    let opt = MOptimizerConfig::default();
    let s53: Vec<_> = corpus.iter().map(|c| decorrelation_stats(&c.mosaic, Kernel::LeGall53, &opt).unwrap().0).collect();
    let s97: Vec<_> = corpus.iter().map(|c| decorrelation_stats(&c.mosaic, Kernel::Cdf97, &opt).unwrap().0).collect();
    StatsSummary {
        before_53: mean(s53.iter().map(|s| s.pearson_before)),
        after_53: mean(s53.iter().map(|s| s.pearson_after.abs())),
        before_97: mean(s97.iter().map(|s| s.pearson_before)),
        after_97: mean(s97.iter().map(|s| s.pearson_after.abs())),
        entropy_lh_53: mean(s53.iter().map(|s| s.entropy_before)),
        entropy_vd_53: mean(s53.iter().map(|s| s.entropy_after)),
        entropy_lh_97: mean(s97.iter().map(|s| s.entropy_before)),
        entropy_vd_97: mean(s97.iter().map(|s| s.entropy_after)),
    }
}

fn decorrelation(s: &StatsSummary) -> Outcome {
    outcome(
        s.before_53 >= 0.9 && s.before_97 >= 0.9 && s.after_53 <= 0.1 && s.after_97 <= 0.1,
        format!(
            "5/3 r {:.4} -> |r| {:.4}; 9/7 r {:.4} -> |r| {:.4}",
            s.before_53, s.after_53, s.before_97, s.after_97
        ),
    )
}

fn entropy_reduction(s: &StatsSummary) -> Outcome {
    outcome(
        s.entropy_vd_53 <= s.entropy_lh_53 - 1.0,
        format!(
            "H(w_LH) {:.3} -> H(v_d) {:.3} bits (9/7: {:.3} -> {:.3})",
            s.entropy_lh_53, s.entropy_vd_53, s.entropy_lh_97, s.entropy_vd_97
        ),
    )
}

fn lossless_ordering(corpus: &[CorpusImage]) -> Outcome {
    let avg = |m: Mode| mean(corpus.iter().map(|c| bench::lossless_bpp(&c.mosaic, m).unwrap()));
    let (proposed, mallat, cfa, demux) = (avg(Mode::Lossless), avg(Mode::Mallat), avg(Mode::CfaGray), avg(Mode::Demux));
    let below = 100.0 * (1.0 - proposed / cfa);
    outcome(
        proposed <= mallat && mallat <= cfa && below >= 1.0,
        format!(
            "proposed {proposed:.4} <= mallat {mallat:.4} <= cfa-gray {cfa:.4} bpp ({below:.2}% below cfa-gray; demux {demux:.4})"
        ),
    )
}

/// Rate-distortion data for one corpus image.
struct Sweeps {
    a: Vec<RdPoint>,
    b: Vec<RdPoint>,
    camra: Vec<RdPoint>,
    near_lossless_b: f64,
    base: EncoderConfig,
}

fn sweep_image(y: &BayerImage) -> Sweeps {
    let display = calibrated_pipeline();
    let reference = render(y, &display).unwrap();
    let base = resolve_config(y, &EncoderConfig::default()).unwrap();
    let camra_cfg = EncoderConfig { pipeline: display, ..base };
    let run = |mode: Mode, cfg: &EncoderConfig| -> Vec<RdPoint> {
        STEPS.iter().map(|&s| rd_point(y, mode, &cfg.with_step(s), Some((&reference, &display))).unwrap()).collect()
    };
    Sweeps {
        a: run(Mode::LossyA, &base),
        b: run(Mode::LossyB, &base),
        camra: run(Mode::Camra, &camra_cfg),
        near_lossless_b: rd_point(y, Mode::LossyB, &base.with_step(NEAR_LOSSLESS_STEP), None).unwrap().psnr_cfa_db,
        base,
    }
}

fn rd_sanity(sweeps: &[Sweeps]) -> Outcome {
    let monotone = |pts: &[RdPoint]| pts.windows(2).all(|w| w[1].psnr_cfa_db <= w[0].psnr_cfa_db && w[1].bpp <= w[0].bpp);
    let bad = sweeps.iter().filter(|s| !(monotone(&s.a) && monotone(&s.b) && monotone(&s.camra))).count();
    let worst = sweeps.iter().map(|s| s.near_lossless_b).fold(f64::INFINITY, f64::min);
    outcome(
        bad == 0 && worst >= 90.0,
        format!("{bad} non-monotone sweeps; lossy-b at step 1/64: min PSNR {worst:.2} dB"),
    )
}

fn average_curve(sweeps: &[Sweeps], pick: impl Fn(&Sweeps) -> &Vec<RdPoint>) -> Vec<(f64, f64)> {
    (0..STEPS.len())
        .map(|i| (mean(sweeps.iter().map(|s| pick(s)[i].bpp)), mean(sweeps.iter().map(|s| pick(s)[i].psnr_cfa_db))))
        .collect()
}

fn crossover(sweeps: &[Sweeps]) -> Outcome {
    let a = average_curve(sweeps, |s| &s.a);
    let b = average_curve(sweeps, |s| &s.b);
    let high = a[0].0.min(b[0].0);
    let low = a[STEPS.len() - 1].0.max(b[STEPS.len() - 1].0);
    let gap_high = interpolate(&b, high) - interpolate(&a, high);
    let gap_low = interpolate(&a, low) - interpolate(&b, low);
    outcome(
        gap_high >= -0.1 && gap_low >= -0.1,
        format!("at {high:.3} bpp lossy-b - lossy-a = {gap_high:+.3} dB; at {low:.3} bpp lossy-a - lossy-b = {gap_low:+.3} dB"),
    )
}

/// Finds a CAMRA step whose rate is within 5% of `target` bpp and returns
/// that point. Starts from the sweep's log-step interpolation, then bisects.
fn matched_camra(y: &BayerImage, sweep: &Sweeps, target: f64) -> Option<RdPoint> {
    let display = calibrated_pipeline();
    let reference = render(y, &display).unwrap();
    let cfg = EncoderConfig { pipeline: display, ..sweep.base };
    let curve: Vec<(f64, f64)> = sweep.camra.iter().map(|p| (p.bpp, p.step.log2())).collect();
    let (mut lo, mut hi) = (-8.0f64, 8.0f64);
    let mut log_step = interpolate(&curve, target).clamp(lo, hi);
    for _ in 0..24 {
        let p = rd_point(y, Mode::Camra, &cfg.with_step(log_step.exp2()), Some((&reference, &display))).unwrap();
        if (p.bpp / target - 1.0).abs() <= 0.05 {
            return Some(p);
        }
        if p.bpp > target {
            lo = log_step;
        } else {
            hi = log_step;
        }
        log_step = 0.5 * (lo + hi);
    }
    None
}

fn camra_benefit(corpus: &[CorpusImage], sweeps: &[Sweeps]) -> Outcome {
    let upper = STEPS.len() / 2;
    let mut gaps = Vec::new();
    let mut unmatched = 0;
    for i in 0..upper {
        let mut diffs = Vec::new();
        for (img, s) in corpus.iter().zip(sweeps) {
            match matched_camra(&img.mosaic, s, s.a[i].bpp) {
                Some(p) => diffs.push(p.psnr_display_db.unwrap() - s.a[i].psnr_display_db.unwrap()),
                None => unmatched += 1,
            }
        }
        gaps.push(mean(diffs));
    }
    let detail = STEPS[..upper]
        .iter()
        .zip(&gaps)
        .map(|(s, g)| format!("step {s}: {g:+.3} dB"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        unmatched == 0 && gaps.iter().all(|&g| g >= -0.1),
        format!("display PSNR camra - lossy-a at matched bpp: {detail}; {unmatched} unmatched"),
    )
}

fn sign_overhead(sweeps: &[Sweeps]) -> Outcome {
    let per_step: Vec<f64> = (0..STEPS.len()).map(|i| mean(sweeps.iter().map(|s| s.camra[i].sign_bpp))).collect();
    let worst = per_step.iter().copied().fold(0.0, f64::max);
    outcome(worst <= 0.01, format!("largest corpus-average sign-plane rate {worst:.5} bpp"))
}

fn m_optimizer(corpus: &[CorpusImage]) -> Outcome {
    let lambdas = [0.01, 0.1, 1.0];
    let (mut trace_bad, mut structure_bad, mut order_bad) = (0, 0, 0);
    let mut worst_off = 0.0f64;
    for img in corpus {
        let mut scales = Vec::new();
        for lambda in lambdas {
            let r = estimate_matrix(&img.mosaic, &MOptimizerConfig { lambda, ..Default::default() }).unwrap();
            trace_bad += usize::from(r.trace.windows(2).any(|w| w[1] > w[0]));
            let m = r.matrix;
            let a = 0.5 * (m[(0, 0)] + m[(0, 1)]);
            let b = 0.5 * (m[(1, 0)] - m[(1, 1)]);
            let off = ((m[(0, 0)] - a).powi(2) + (m[(0, 1)] - a).powi(2) + (m[(1, 0)] - b).powi(2) + (m[(1, 1)] + b).powi(2))
                .sqrt();
            let ratio = off / m.norm();
            worst_off = worst_off.max(ratio);
            structure_bad += usize::from(ratio > 0.05);
            scales.push(r.scale());
        }
        order_bad += usize::from(!scales.windows(2).all(|w| w[1] < w[0]));
    }
    outcome(
        trace_bad + structure_bad + order_bad == 0,
        format!(
            "{trace_bad} increasing traces, {structure_bad} off-structure (worst {:.2}% of |M|_F), {order_bad} non-decreasing k over lambda",
            100.0 * worst_off
        ),
    )
}

/// Direct separable filtering with whole-sample symmetric extension.
fn filter_bank_53(x: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let at = |i: isize| {
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        x[j as usize]
    };
    let low = [-1.0 / 8.0, 2.0 / 8.0, 6.0 / 8.0, 2.0 / 8.0, -1.0 / 8.0];
    let high = [-0.5, 1.0, -0.5];
    let h = n / 2;
    let mut out = vec![0.0; n as usize];
    for i in 0..h {
        out[i as usize] = (0..5).map(|k| low[k as usize] * at(2 * i + k - 2)).sum();
        out[(h + i) as usize] = (0..3).map(|k| high[k as usize] * at(2 * i + 1 + k - 1)).sum();
    }
    out
}

fn oracle_2d(grid: &Plane<f64>) -> Plane<f64> {
    let rows = Plane::from_vec(grid.width(), grid.height(), (0..grid.height()).flat_map(|r| filter_bank_53(grid.row(r))).collect())
        .unwrap()
        .transpose();
    Plane::from_vec(rows.width(), rows.height(), (0..rows.height()).flat_map(|r| filter_bank_53(rows.row(r))).collect())
        .unwrap()
        .transpose()
}

fn oracle_equivalence() -> Outcome {
    let mut lifting_bad = 0;
    for pos in 0..64 {
        for amplitude in [64, -64] {
            let grid = Plane::from_fn(8, 8, |r, c| if r * 8 + c == pos { amplitude } else { 0 });
            let s = forward_2d(&LeGall53, &grid).unwrap();
            let expect = oracle_2d(&grid.to_f64());
            let mut got = Plane::<i32>::new(8, 8);
            got.paste(0, 0, &s.ll);
            got.paste(0, 4, &s.lh);
            got.paste(4, 0, &s.hl);
            got.paste(4, 4, &s.hh);
            lifting_bad += usize::from(got.to_f64() != expect);
        }
    }
    let mut sumdiff_bad = 0;
    for a in -64..=64 {
        for b in -64..=64 {
            let oracle = (((a + b) as f64 / 2.0).floor() as i32, a - b);
            let got = sumdiff_px(a, b);
            sumdiff_bad += usize::from(got != oracle || sumdiff_inverse_px(got.0, got.1) != (a, b));
        }
    }
    outcome(
        lifting_bad == 0 && sumdiff_bad == 0,
        format!("{lifting_bad}/128 impulse mismatches, {sumdiff_bad}/16641 sum/difference mismatches"),
    )
}

fn transform_count() -> Outcome {
    // a size no other check uses, so the count is unambiguous
    let cfg = CorpusConfig { count: 1, width: 136, height: 104, ..Default::default() };
    let y = bench::generate_image(&cfg, 0).unwrap().mosaic;
    let count = |mode: Mode| {
        let enc = EncoderConfig { pipeline: calibrated_pipeline(), ..Default::default() };
        let (r, log) = instrument::capture(|| codec::encode(&y, mode, &enc));
        r.unwrap();
        log.count_at(136, 104)
    };
    let proposed: Vec<usize> = [Mode::Lossless, Mode::LossyA, Mode::LossyB, Mode::Camra].map(count).to_vec();
    let rgb = count(Mode::Rgb);
    outcome(
        proposed.iter().all(|&c| c == 1) && rgb == 3,
        format!("full-size level-1 transforms: proposed modes {proposed:?}, rgb baseline {rgb}"),
    )
}

#[test]
fn acceptance() {
    let corpus = generate_corpus(&CorpusConfig::default()).expect("corpus");
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    results.push((1, "lossless round trip", lossless_round_trip(&corpus)));
    let stats = decorrelation_summary(&corpus);
    results.push((2, "decorrelation statistics", decorrelation(&stats)));
    results.push((3, "entropy reduction", entropy_reduction(&stats)));
    results.push((4, "lossless ordering", lossless_ordering(&corpus)));
    let sweeps: Vec<Sweeps> = corpus.iter().map(|c| sweep_image(&c.mosaic)).collect();
    results.push((5, "lossy rate-distortion sanity", rd_sanity(&sweeps)));
    results.push((6, "scheme crossover", crossover(&sweeps)));
    results.push((7, "pipeline-aware benefit", camra_benefit(&corpus, &sweeps)));
    results.push((8, "sign-plane overhead", sign_overhead(&sweeps)));
    results.push((9, "matrix optimiser", m_optimizer(&corpus)));
    results.push((10, "oracle equivalence", oracle_equivalence()));
    results.push((11, "transform count", transform_count()));

    // written to stderr directly so the lines survive libtest output capture
    let mut err = std::io::stderr().lock();
    for (id, name, o) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "{status} criterion {id:>2} {name}: {}", o.detail).expect("stderr");
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
