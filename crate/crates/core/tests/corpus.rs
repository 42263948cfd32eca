use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use camra::bench::{generate_corpus, lossless_bpp, CorpusConfig};
use camra::codec::Mode;
use camra::plane::Plane;

/// Fraction of the mean-removed energy of `p` at radial frequencies below
/// `cutoff` cycles per pixel.
fn lowpass_energy_fraction(p: &Plane<f64>, cutoff: f64) -> f64 {
    let (w, h) = (p.width(), p.height());
    let mean = p.data().iter().sum::<f64>() / p.len() as f64;
    let mut buf: Vec<Complex<f64>> = p.data().iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
    let freq = |k: usize, n: usize| if k <= n / 2 { k as f64 / n as f64 } else { (n - k) as f64 / n as f64 };
    let (mut low, mut total) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            let e = buf[r * w + c].norm_sqr();
            total += e;
            if freq(c, w).hypot(freq(r, h)) < cutoff {
                low += e;
            }
        }
    }
    low / total
}

#[test]
fn chroma_is_lowpass() {
    let corpus = generate_corpus(&CorpusConfig { count: 4, width: 256, height: 256, ..Default::default() }).unwrap();
    for img in &corpus {
        let [r, _, b] = &img.truth.planes;
        let alpha = Plane::from_fn(r.width(), r.height(), |y, x| (r.get(y, x) - b.get(y, x)) / 4.0);
        let fraction = lowpass_energy_fraction(&alpha, 0.125);
        assert!(fraction >= 0.95, "image {}: {fraction:.4}", img.id);
    }
}

#[test]
fn demux_is_close_to_mallat() {
    let corpus = generate_corpus(&CorpusConfig { count: 6, width: 256, height: 256, ..Default::default() }).unwrap();
    let avg = |m: Mode| corpus.iter().map(|c| lossless_bpp(&c.mosaic, m).unwrap()).sum::<f64>() / corpus.len() as f64;
    let (demux, mallat) = (avg(Mode::Demux), avg(Mode::Mallat));
    assert!((demux / mallat - 1.0).abs() <= 0.10, "demux {demux:.4} vs mallat {mallat:.4}");
}

#[test]
fn pure_tone_oracle() {
    // bin-aligned tones: 6/64 cycles/pixel lies inside the 0.125 disc, 0.25 outside
    let tone = |f: f64| Plane::from_fn(64, 64, |_, c| (std::f64::consts::TAU * f * c as f64).cos());
    assert!(lowpass_energy_fraction(&tone(6.0 / 64.0), 0.125) > 1.0 - 1e-12);
    assert!(lowpass_energy_fraction(&tone(0.25), 0.125) < 1e-12);
}
