//! Separable lifting wavelet transforms with whole-sample symmetric extension:
//! the reversible LeGall 5/3 on integers and the Daubechies (CDF) 9/7 on reals,
//! plus dyadic pyramids used both for the plain multi-level transform and for
//! wavelet-packet decomposition of individual subbands.

use crate::error::{dim_err, Result};
use crate::instrument;
use crate::par;
use crate::plane::Plane;

/// A 1-D lifting kernel operating in place on an even-length signal.
///
/// `forward` leaves the lowpass coefficients in the first half of `x` and the
/// highpass coefficients in the second half; `inverse` undoes it.
pub trait Kernel: Sync {
    type Sample: Copy + Default + Send + Sync + PartialEq + std::fmt::Debug;

    fn forward(&self, x: &mut [Self::Sample], scratch: &mut Vec<Self::Sample>);
    fn inverse(&self, x: &mut [Self::Sample], scratch: &mut Vec<Self::Sample>);
}

/// Reversible integer LeGall 5/3 with floor rounding.
#[derive(Clone, Copy, Debug, Default)]
pub struct LeGall53;

impl Kernel for LeGall53 {
    type Sample = i32;

    fn forward(&self, x: &mut [i32], scratch: &mut Vec<i32>) {
        let n = x.len();
        let h = n / 2;
        scratch.clear();
        scratch.extend_from_slice(x);
        let s = &scratch[..];
        let (low, high) = x.split_at_mut(h);
        for i in 0..h {
            let right = if 2 * i + 2 < n { s[2 * i + 2] } else { s[n - 2] };
            high[i] = s[2 * i + 1] - ((s[2 * i] + right) >> 1);
        }
        for i in 0..h {
            let dl = if i > 0 { high[i - 1] } else { high[0] };
            low[i] = s[2 * i] + ((dl + high[i] + 2) >> 2);
        }
    }

    fn inverse(&self, x: &mut [i32], scratch: &mut Vec<i32>) {
        let n = x.len();
        let h = n / 2;
        scratch.clear();
        scratch.resize(n, 0);
        let (low, high) = x.split_at(h);
        for i in 0..h {
            let dl = if i > 0 { high[i - 1] } else { high[0] };
            scratch[2 * i] = low[i] - ((dl + high[i] + 2) >> 2);
        }
        for i in 0..h {
            let right = if 2 * i + 2 < n { scratch[2 * i + 2] } else { scratch[n - 2] };
            scratch[2 * i + 1] = high[i] + ((scratch[2 * i] + right) >> 1);
        }
        x.copy_from_slice(scratch);
    }
}

/// CDF 9/7 lifting coefficients.
pub const CDF97_ALPHA: f64 = -1.586134342;
pub const CDF97_BETA: f64 = -0.052980118;
pub const CDF97_GAMMA: f64 = 0.882911075;
pub const CDF97_DELTA: f64 = 0.443506852;
pub const CDF97_K: f64 = 1.230174105;

/// Daubechies 9/7 in double precision. Subbands are scaled so the lowpass
/// has DC gain √2, which keeps the transform close to orthonormal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cdf97;

impl Cdf97 {
    fn lift(x: &mut [f64], parity: usize, c: f64) {
        let n = x.len();
        let mut i = parity;
        while i < n {
            let l = if i > 0 { x[i - 1] } else { x[1] };
            let r = if i + 1 < n { x[i + 1] } else { x[n - 2] };
            x[i] += c * (l + r);
            i += 2;
        }
    }

    /// DC gain of the lowpass channel and Nyquist gain of the highpass
    /// channel of one analysis step, measured on the implemented filters.
    pub fn gains() -> (f64, f64) {
        let n = 32;
        let mut s = vec![1.0; n];
        let mut scratch = Vec::new();
        Cdf97.forward(&mut s, &mut scratch);
        let mut a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Cdf97.forward(&mut a, &mut scratch);
        (s[n / 4], a[n / 2 + n / 4])
    }
}

impl Kernel for Cdf97 {
    type Sample = f64;

    fn forward(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        let n = x.len();
        let h = n / 2;
        Self::lift(x, 1, CDF97_ALPHA);
        Self::lift(x, 0, CDF97_BETA);
        Self::lift(x, 1, CDF97_GAMMA);
        Self::lift(x, 0, CDF97_DELTA);
        let lo = std::f64::consts::SQRT_2 / CDF97_K;
        let hi = CDF97_K / std::f64::consts::SQRT_2;
        scratch.clear();
        scratch.extend_from_slice(x);
        for i in 0..h {
            x[i] = scratch[2 * i] * lo;
            x[h + i] = scratch[2 * i + 1] * hi;
        }
    }

    fn inverse(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        let n = x.len();
        let h = n / 2;
        let lo = CDF97_K / std::f64::consts::SQRT_2;
        let hi = std::f64::consts::SQRT_2 / CDF97_K;
        scratch.clear();
        scratch.resize(n, 0.0);
        for i in 0..h {
            scratch[2 * i] = x[i] * lo;
            scratch[2 * i + 1] = x[h + i] * hi;
        }
        x.copy_from_slice(scratch);
        Self::lift(x, 0, -CDF97_DELTA);
        Self::lift(x, 1, -CDF97_GAMMA);
        Self::lift(x, 0, -CDF97_BETA);
        Self::lift(x, 1, -CDF97_ALPHA);
    }
}

/// The four subbands of one 2-D analysis level. The first letter names the
/// vertical filter, the second the horizontal one.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet<T> {
    pub ll: Plane<T>,
    pub lh: Plane<T>,
    pub hl: Plane<T>,
    pub hh: Plane<T>,
}

impl<T: Copy + Default> SubbandSet<T> {
    pub fn coefficient_count(&self) -> usize {
        self.ll.len() + self.lh.len() + self.hl.len() + self.hh.len()
    }
}

fn rows_forward<K: Kernel>(kernel: &K, plane: &mut Plane<K::Sample>) {
    let w = plane.width();
    par::for_each_row(plane.data_mut(), w, |_, row| {
        let mut scratch = Vec::with_capacity(row.len());
        kernel.forward(row, &mut scratch);
    });
}

fn rows_inverse<K: Kernel>(kernel: &K, plane: &mut Plane<K::Sample>) {
    let w = plane.width();
    par::for_each_row(plane.data_mut(), w, |_, row| {
        let mut scratch = Vec::with_capacity(row.len());
        kernel.inverse(row, &mut scratch);
    });
}

/// One level of separable analysis: rows, then columns.
pub fn forward_2d<K: Kernel>(kernel: &K, grid: &Plane<K::Sample>) -> Result<SubbandSet<K::Sample>> {
    let (w, h) = (grid.width(), grid.height());
    if w < 2 || h < 2 || w % 2 != 0 || h % 2 != 0 {
        return dim_err(format!("cannot apply a wavelet level to a {w}x{h} grid"));
    }
    instrument::record_forward(w, h);
    let mut t = grid.clone();
    rows_forward(kernel, &mut t);
    let mut t = t.transpose();
    rows_forward(kernel, &mut t);
    let t = t.transpose();
    let (hw, hh) = (w / 2, h / 2);
    Ok(SubbandSet {
        ll: t.crop(0, 0, hw, hh),
        lh: t.crop(0, hw, hw, hh),
        hl: t.crop(hh, 0, hw, hh),
        hh: t.crop(hh, hw, hw, hh),
    })
}

/// Synthesis matching [`forward_2d`].
pub fn inverse_2d<K: Kernel>(kernel: &K, bands: &SubbandSet<K::Sample>) -> Result<Plane<K::Sample>> {
    let (hw, hh) = (bands.ll.width(), bands.ll.height());
    if [&bands.lh, &bands.hl, &bands.hh]
        .iter()
        .any(|b| b.width() != hw || b.height() != hh)
    {
        return dim_err("subbands differ in size");
    }
    let mut t = Plane::new(2 * hw, 2 * hh);
    t.paste(0, 0, &bands.ll);
    t.paste(0, hw, &bands.lh);
    t.paste(hh, 0, &bands.hl);
    t.paste(hh, hw, &bands.hh);
    let mut t = t.transpose();
    rows_inverse(kernel, &mut t);
    let mut t = t.transpose();
    rows_inverse(kernel, &mut t);
    Ok(t)
}

/// A dyadic decomposition of one grid: detail triples from finest to
/// coarsest plus the final lowpass residue.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid<T> {
    pub ll: Plane<T>,
    /// `details[0]` is the finest level, each entry is `[LH, HL, HH]`.
    pub details: Vec<[Plane<T>; 3]>,
}

impl<T: Copy + Default> Pyramid<T> {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn coefficient_count(&self) -> usize {
        self.ll.len() + self.details.iter().flatten().map(Plane::len).sum::<usize>()
    }

    /// Subbands in coding order: lowpass first, then details from coarse to fine.
    pub fn subbands(&self) -> Vec<&Plane<T>> {
        let mut out = vec![&self.ll];
        for level in self.details.iter().rev() {
            out.extend(level.iter());
        }
        out
    }

    /// Shapes matching [`Pyramid::subbands`] for a `width x height` grid.
    pub fn subband_shapes(width: usize, height: usize, levels: usize) -> Vec<(usize, usize)> {
        let (lw, lh) = (width >> levels, height >> levels);
        let mut out = vec![(lw, lh)];
        for l in (1..=levels).rev() {
            let s = (width >> l, height >> l);
            out.extend([s, s, s]);
        }
        out
    }

    /// Reassembles a pyramid from subbands in [`Pyramid::subbands`] order.
    pub fn from_subbands(mut bands: Vec<Plane<T>>) -> Result<Self> {
        if bands.is_empty() || !(bands.len() - 1).is_multiple_of(3) {
            return dim_err(format!("{} subbands do not form a pyramid", bands.len()));
        }
        let levels = (bands.len() - 1) / 3;
        let mut details = Vec::with_capacity(levels);
        while bands.len() > 1 {
            let hh = bands.pop().unwrap();
            let hl = bands.pop().unwrap();
            let lh = bands.pop().unwrap();
            details.push([lh, hl, hh]);
        }
        Ok(Self {
            ll: bands.pop().unwrap(),
            details,
        })
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U + Copy) -> Pyramid<U> {
        Pyramid {
            ll: self.ll.map(f),
            details: self
                .details
                .iter()
                .map(|d| [d[0].map(f), d[1].map(f), d[2].map(f)])
                .collect(),
        }
    }
}

/// Largest `n ≤ max` such that both sides are divisible by `2^n`.
pub fn max_levels(width: usize, height: usize, max: usize) -> usize {
    let mut n = 0;
    while n < max && width.is_multiple_of(1 << (n + 1)) && height.is_multiple_of(1 << (n + 1)) {
        n += 1;
    }
    n
}

/// Applies `levels` dyadic analysis steps to `band` (levels = 0 is the identity).
pub fn packet_decompose<K: Kernel>(
    kernel: &K,
    band: &Plane<K::Sample>,
    levels: usize,
) -> Result<Pyramid<K::Sample>> {
    let (w, h) = (band.width(), band.height());
    let div = 1usize << levels;
    if w % div != 0 || h % div != 0 || (levels > 0 && (w < div || h < div)) {
        return dim_err(format!(
            "a {w}x{h} band cannot take {levels} levels (sides must be divisible by {div})"
        ));
    }
    let mut ll = band.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let s = forward_2d(kernel, &ll)?;
        details.push([s.lh, s.hl, s.hh]);
        ll = s.ll;
    }
    Ok(Pyramid { ll, details })
}

/// Inverse of [`packet_decompose`].
pub fn packet_reconstruct<K: Kernel>(
    kernel: &K,
    pyramid: &Pyramid<K::Sample>,
) -> Result<Plane<K::Sample>> {
    let mut ll = pyramid.ll.clone();
    for [lh, hl, hh] in pyramid.details.iter().rev() {
        ll = inverse_2d(
            kernel,
            &SubbandSet {
                ll,
                lh: lh.clone(),
                hl: hl.clone(),
                hh: hh.clone(),
            },
        )?;
    }
    Ok(ll)
}

/// Level-1 subbands with a further dyadic decomposition of each band.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketTree<T> {
    /// Children of LL, LH, HL and HH in that order.
    pub bands: [Pyramid<T>; 4],
}

impl<T: Copy + Default> PacketTree<T> {
    pub fn coefficient_count(&self) -> usize {
        self.bands.iter().map(Pyramid::coefficient_count).sum()
    }
}

/// One analysis level followed by `levels[i]` packet levels on band `i`
/// (ordered LL, LH, HL, HH).
pub fn packet_tree<K: Kernel>(
    kernel: &K,
    grid: &Plane<K::Sample>,
    levels: [usize; 4],
) -> Result<PacketTree<K::Sample>> {
    let s = forward_2d(kernel, grid)?;
    Ok(PacketTree {
        bands: [
            packet_decompose(kernel, &s.ll, levels[0])?,
            packet_decompose(kernel, &s.lh, levels[1])?,
            packet_decompose(kernel, &s.hl, levels[2])?,
            packet_decompose(kernel, &s.hh, levels[3])?,
        ],
    })
}

pub fn packet_tree_inverse<K: Kernel>(
    kernel: &K,
    tree: &PacketTree<K::Sample>,
) -> Result<Plane<K::Sample>> {
    let [ll, lh, hl, hh] = &tree.bands;
    inverse_2d(
        kernel,
        &SubbandSet {
            ll: packet_reconstruct(kernel, ll)?,
            lh: packet_reconstruct(kernel, lh)?,
            hl: packet_reconstruct(kernel, hl)?,
            hh: packet_reconstruct(kernel, hh)?,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_i32(rng: &mut ChaCha8Rng, w: usize, h: usize, amp: i32) -> Plane<i32> {
        Plane::from_fn(w, h, |_, _| rng.random_range(-amp..=amp))
    }

    #[test]
    fn constant_grid_53() {
        let g = Plane::filled(16, 8, 77);
        let s = forward_2d(&LeGall53, &g).unwrap();
        assert!(s.ll.data().iter().all(|&v| v == 77));
        for b in [&s.lh, &s.hl, &s.hh] {
            assert!(b.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn roundtrip_53_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let g = random_i32(&mut rng, 16, 16, 1 << 15);
            let s = forward_2d(&LeGall53, &g).unwrap();
            assert_eq!(inverse_2d(&LeGall53, &s).unwrap(), g);
        }
    }

    #[test]
    fn odd_side_rejected() {
        assert!(forward_2d(&LeGall53, &Plane::<i32>::new(6, 5)).is_err());
        assert!(forward_2d(&Cdf97, &Plane::<f64>::new(3, 4)).is_err());
        assert!(packet_decompose(&LeGall53, &Plane::<i32>::new(12, 8), 3).is_err());
    }

    #[test]
    fn constant_grid_97() {
        let c = 123.5;
        let s = forward_2d(&Cdf97, &Plane::filled(32, 32, c)).unwrap();
        for b in [&s.lh, &s.hl, &s.hh] {
            assert!(b.data().iter().all(|v| v.abs() < 1e-7 * c));
        }
    }

    #[test]
    fn roundtrip_97_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Plane::from_fn(64, 64, |_, _| rng.random_range(-1000.0..1000.0));
        let s = forward_2d(&Cdf97, &g).unwrap();
        let r = inverse_2d(&Cdf97, &s).unwrap();
        let mse: f64 = g.data().iter().zip(r.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 4096.0;
        assert!(mse.sqrt() < 1e-6);
    }

    #[test]
    fn energy_ratio_97_is_frozen() {
        // Measured once on this implementation (seeded white noise, 64x64).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Plane::from_fn(64, 64, |_, _| rng.random_range(-1.0..1.0));
        let s = forward_2d(&Cdf97, &g).unwrap();
        let e_in: f64 = g.data().iter().map(|v| v * v).sum();
        let e_out: f64 = [&s.ll, &s.lh, &s.hl, &s.hh]
            .iter()
            .flat_map(|b| b.data())
            .map(|v| v * v)
            .sum();
        let ratio = e_out / e_in;
        assert!((ratio - FROZEN_97_ENERGY_RATIO).abs() < 1e-6, "ratio {ratio}");
        assert!((ratio - 1.0).abs() < 0.03);
    }

    const FROZEN_97_ENERGY_RATIO: f64 = 1.0219577884666768;

    #[test]
    fn separable_against_row_transpose_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_i32(&mut rng, 8, 12, 500);
        let mut t = g.clone();
        let mut scratch = Vec::new();
        for r in 0..t.height() {
            LeGall53.forward(t.row_mut(r), &mut scratch);
        }
        let mut t = t.transpose();
        for r in 0..t.height() {
            LeGall53.forward(t.row_mut(r), &mut scratch);
        }
        let t = t.transpose();
        let s = forward_2d(&LeGall53, &g).unwrap();
        assert_eq!(s.ll, t.crop(0, 0, 4, 6));
        assert_eq!(s.lh, t.crop(0, 4, 4, 6));
        assert_eq!(s.hl, t.crop(6, 0, 4, 6));
        assert_eq!(s.hh, t.crop(6, 4, 4, 6));
    }

    /// Interior lifting on an explicitly mirrored signal must match the
    /// transform of the original with implicit symmetric extension.
    #[test]
    fn boundary_matches_explicit_symmetric_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let pad = 8;
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let ext = |i: isize| -> f64 {
                let m = 2 * (n as isize - 1);
                let mut j = i.rem_euclid(m);
                if j >= n as isize {
                    j = m - j;
                }
                x[j as usize]
            };
            let mut big: Vec<f64> = (-(pad as isize)..(n + pad) as isize).map(ext).collect();
            let mut scratch = Vec::new();
            Cdf97.forward(&mut big, &mut scratch);
            let mut small = x.clone();
            Cdf97.forward(&mut small, &mut scratch);
            let bh = big.len() / 2;
            for i in 0..n / 2 {
                assert!((small[i] - big[pad / 2 + i]).abs() < 1e-9);
                assert!((small[n / 2 + i] - big[bh + pad / 2 + i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn packet_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_i32(&mut rng, 32, 16, 4000);
        let p0 = packet_decompose(&LeGall53, &g, 0).unwrap();
        assert_eq!(p0.ll, g);
        for levels in 0..=4 {
            let p = packet_decompose(&LeGall53, &g, levels).unwrap();
            assert_eq!(p.coefficient_count(), g.len());
            assert_eq!(packet_reconstruct(&LeGall53, &p).unwrap(), g);
            let shapes = Pyramid::<i32>::subband_shapes(32, 16, levels);
            let got: Vec<_> = p.subbands().iter().map(|b| (b.width(), b.height())).collect();
            assert_eq!(shapes, got);
            let rebuilt = Pyramid::from_subbands(p.subbands().into_iter().cloned().collect()).unwrap();
            assert_eq!(rebuilt, p);
        }
    }

    #[test]
    fn packet_tree_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_i32(&mut rng, 64, 32, 4000);
        let t = packet_tree(&LeGall53, &g, [3, 2, 1, 0]).unwrap();
        assert_eq!(t.coefficient_count(), g.len());
        assert_eq!(packet_tree_inverse(&LeGall53, &t).unwrap(), g);
    }

    #[test]
    fn max_levels_examples() {
        assert_eq!(max_levels(512, 512, 5), 5);
        assert_eq!(max_levels(96, 64, 5), 5);
        assert_eq!(max_levels(96, 48, 5), 4);
        assert_eq!(max_levels(6, 10, 5), 1);
        assert_eq!(max_levels(3, 10, 5), 0);
    }

    #[test]
    fn gains_97() {
        let (gl, gh) = Cdf97::gains();
        assert!((gl - std::f64::consts::SQRT_2).abs() < 1e-6, "{gl}");
        assert!(gh.abs() > 1.0 && gh.abs() < 2.0, "{gh}");
    }

    proptest! {
        #[test]
        fn roundtrip_53_wide_range(seed in any::<u64>(), w in 1usize..6, h in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_i32(&mut rng, 2 * w, 2 * h, 1 << 20);
            let s = forward_2d(&LeGall53, &g).unwrap();
            prop_assert_eq!(inverse_2d(&LeGall53, &s).unwrap(), g);
        }
    }
}
