//! Decorrelation of the level-1 LH and HL subbands of a CFA transform.
//!
//! Both bands carry the same lowpass chrominance (sampled through two
//! conjugate filters), so they are nearly collinear. The lossless path
//! replaces them with an integer sum/difference pair; the lossy path mixes
//! them with a real 2x2 matrix `M` chosen by [`optimize_m`].

use nalgebra::Matrix2;

use crate::entropy::entropy_estimate;
use crate::error::{dim_err, Error, Result};
use crate::plane::Plane;
use crate::wavelet::SubbandSet;

/// Largest condition number accepted for a decorrelation matrix.
pub const MAX_CONDITION: f64 = 1e6;

/// `v_d = a − b`, `v_s = ⌊(a + b)/2⌋`.
#[inline]
pub fn sumdiff_px(a: i32, b: i32) -> (i32, i32) {
    ((a + b) >> 1, a - b)
}

/// Inverse of [`sumdiff_px`]: `b = v_s − ⌊v_d/2⌋`, `a = v_d + b`.
#[inline]
pub fn sumdiff_inverse_px(vs: i32, vd: i32) -> (i32, i32) {
    let b = vs - (vd >> 1);
    (vd + b, b)
}

/// Integer sum/difference of `(w_LH, w_HL)`, returning `(v_s, v_d)`.
pub fn sumdiff_forward(lh: &Plane<i32>, hl: &Plane<i32>) -> Result<(Plane<i32>, Plane<i32>)> {
    if !lh.same_shape(hl) {
        return dim_err("LH and HL differ in size");
    }
    let (vs, vd): (Vec<i32>, Vec<i32>) = lh
        .data()
        .iter()
        .zip(hl.data())
        .map(|(&a, &b)| sumdiff_px(a, b))
        .unzip();
    Ok((
        Plane::from_vec(lh.width(), lh.height(), vs)?,
        Plane::from_vec(lh.width(), lh.height(), vd)?,
    ))
}

/// Restores `(w_LH, w_HL)` from `(v_s, v_d)`.
pub fn sumdiff_inverse(vs: &Plane<i32>, vd: &Plane<i32>) -> Result<(Plane<i32>, Plane<i32>)> {
    if !vs.same_shape(vd) {
        return dim_err("v_s and v_d differ in size");
    }
    let (lh, hl): (Vec<i32>, Vec<i32>) = vs
        .data()
        .iter()
        .zip(vd.data())
        .map(|(&s, &d)| sumdiff_inverse_px(s, d))
        .unzip();
    Ok((
        Plane::from_vec(vs.width(), vs.height(), lh)?,
        Plane::from_vec(vs.width(), vs.height(), hl)?,
    ))
}

/// An invertible 2x2 mixing matrix together with its inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecorrelationMatrix {
    m: Matrix2<f64>,
    inv: Matrix2<f64>,
}

impl DecorrelationMatrix {
    pub fn new(m: Matrix2<f64>) -> Result<Self> {
        let cond = condition_number(&m);
        if !cond.is_finite() || cond >= MAX_CONDITION {
            return Err(Error::SingularMatrix(cond));
        }
        let inv = m.try_inverse().ok_or(Error::SingularMatrix(f64::INFINITY))?;
        Ok(Self { m, inv })
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]))
    }

    /// `[[½, ½], [½, −½]]`, the real-valued sum/difference pair.
    pub fn sum_difference() -> Self {
        Self::from_rows([[0.5, 0.5], [0.5, -0.5]]).expect("well conditioned")
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &Matrix2<f64> {
        &self.inv
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.m[(0, 0)], self.m[(0, 1)]], [self.m[(1, 0)], self.m[(1, 1)]]]
    }

    /// Entries as 16.16 fixed point, row-major.
    pub fn to_fixed(&self) -> [i32; 4] {
        let r = self.rows();
        [r[0][0], r[0][1], r[1][0], r[1][1]].map(|v| (v * 65536.0).round() as i32)
    }

    pub fn from_fixed(f: [i32; 4]) -> Result<Self> {
        let v = f.map(|x| x as f64 / 65536.0);
        Self::from_rows([[v[0], v[1]], [v[2], v[3]]])
    }

    /// Rounds the entries to the 16.16 grid so encoder and decoder agree.
    pub fn quantized(&self) -> Result<Self> {
        Self::from_fixed(self.to_fixed())
    }

    #[inline]
    pub fn apply(&self, a: f64, b: f64) -> (f64, f64) {
        let m = &self.m;
        (m[(0, 0)] * a + m[(0, 1)] * b, m[(1, 0)] * a + m[(1, 1)] * b)
    }

    #[inline]
    pub fn apply_inverse(&self, s: f64, d: f64) -> (f64, f64) {
        let m = &self.inv;
        (m[(0, 0)] * s + m[(0, 1)] * d, m[(1, 0)] * s + m[(1, 1)] * d)
    }

    /// Scale of the sum channel relative to `(w_LH + w_HL)/2`, i.e. `2ka`
    /// for a matrix of the form `k·[[a, a], [b, −b]]`.
    pub fn sum_gain(&self) -> f64 {
        self.m[(0, 0)] + self.m[(0, 1)]
    }
}

pub fn condition_number(m: &Matrix2<f64>) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `(v_s, v_d) = M·(w_LH, w_HL)` per pixel.
pub fn matrix_forward(
    lh: &Plane<f64>,
    hl: &Plane<f64>,
    m: &DecorrelationMatrix,
) -> Result<(Plane<f64>, Plane<f64>)> {
    if !lh.same_shape(hl) {
        return dim_err("LH and HL differ in size");
    }
    let (vs, vd): (Vec<f64>, Vec<f64>) = lh
        .data()
        .iter()
        .zip(hl.data())
        .map(|(&a, &b)| m.apply(a, b))
        .unzip();
    Ok((
        Plane::from_vec(lh.width(), lh.height(), vs)?,
        Plane::from_vec(lh.width(), lh.height(), vd)?,
    ))
}

/// `(w_LH, w_HL) = M⁻¹·(v_s, v_d)` per pixel.
pub fn matrix_inverse(
    vs: &Plane<f64>,
    vd: &Plane<f64>,
    m: &DecorrelationMatrix,
) -> Result<(Plane<f64>, Plane<f64>)> {
    if !vs.same_shape(vd) {
        return dim_err("v_s and v_d differ in size");
    }
    let (lh, hl): (Vec<f64>, Vec<f64>) = vs
        .data()
        .iter()
        .zip(vd.data())
        .map(|(&s, &d)| m.apply_inverse(s, d))
        .unzip();
    Ok((
        Plane::from_vec(vs.width(), vs.height(), lh)?,
        Plane::from_vec(vs.width(), vs.height(), hl)?,
    ))
}

/// How `(v_s, v_d)` were derived from `(w_LH, w_HL)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decorrelation {
    IntegerSumDiff,
    Matrix(DecorrelationMatrix),
}

impl Decorrelation {
    pub fn sum_gain(&self) -> f64 {
        match self {
            Decorrelation::IntegerSumDiff => 1.0,
            Decorrelation::Matrix(m) => m.sum_gain(),
        }
    }
}

/// Level-1 subbands with LH/HL replaced by their decorrelated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DecorrelatedBands<T> {
    pub ll: Plane<T>,
    pub v_s: Plane<T>,
    pub v_d: Plane<T>,
    pub hh: Plane<T>,
    pub transform: Decorrelation,
}

impl DecorrelatedBands<i32> {
    pub fn from_integer(bands: SubbandSet<i32>) -> Result<Self> {
        let (v_s, v_d) = sumdiff_forward(&bands.lh, &bands.hl)?;
        Ok(Self {
            ll: bands.ll,
            v_s,
            v_d,
            hh: bands.hh,
            transform: Decorrelation::IntegerSumDiff,
        })
    }

    pub fn into_subbands(self) -> Result<SubbandSet<i32>> {
        let (lh, hl) = sumdiff_inverse(&self.v_s, &self.v_d)?;
        Ok(SubbandSet {
            ll: self.ll,
            lh,
            hl,
            hh: self.hh,
        })
    }
}

impl DecorrelatedBands<f64> {
    pub fn from_real(bands: SubbandSet<f64>, m: DecorrelationMatrix) -> Result<Self> {
        let (v_s, v_d) = matrix_forward(&bands.lh, &bands.hl, &m)?;
        Ok(Self {
            ll: bands.ll,
            v_s,
            v_d,
            hh: bands.hh,
            transform: Decorrelation::Matrix(m),
        })
    }

    pub fn into_subbands(self) -> Result<SubbandSet<f64>> {
        let Decorrelation::Matrix(m) = self.transform else {
            return Err(Error::InvalidParameter(
                "real bands need a matrix decorrelation".into(),
            ));
        };
        let (lh, hl) = matrix_inverse(&self.v_s, &self.v_d, &m)?;
        Ok(SubbandSet {
            ll: self.ll,
            lh,
            hl,
            hh: self.hh,
        })
    }
}

/// Which reconstruction-error term the optimiser uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ObjectiveForm {
    /// `‖M⁻¹‖_F²`: the expected error of `M⁻¹q` for i.i.d. uniform `q`.
    #[default]
    DerivationConsistent = 0,
    /// `‖M‖_F²`, optimised under `|det M| ≥ |det M₀|` so it cannot collapse to zero.
    Literal = 1,
}

impl ObjectiveForm {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::DerivationConsistent),
            1 => Ok(Self::Literal),
            _ => Err(Error::Format(format!("unknown objective form {v}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MOptimizerConfig {
    /// Sparsity weight on the mean L1 norm of `M·w`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Initial gradient step.
    pub step: f64,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
    pub objective: ObjectiveForm,
    /// Upper bound on `‖M‖_F`.
    pub trust_radius: f64,
}

impl Default for MOptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            max_iters: 10_000,
            step: 1e-2,
            tolerance: 1e-6,
            objective: ObjectiveForm::DerivationConsistent,
            trust_radius: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MOptimization {
    pub matrix: Matrix2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl MOptimization {
    pub fn decorrelation_matrix(&self) -> Result<DecorrelationMatrix> {
        DecorrelationMatrix::new(self.matrix)
    }

    /// Mean magnitude of the two rows, the `k` in `k·[[a, a], [b, −b]]`.
    pub fn scale(&self) -> f64 {
        row_scale(&self.matrix)
    }
}

pub fn row_scale(m: &Matrix2<f64>) -> f64 {
    let r0 = (m[(0, 0)].powi(2) + m[(0, 1)].powi(2)).sqrt();
    let r1 = (m[(1, 0)].powi(2) + m[(1, 1)].powi(2)).sqrt();
    0.5 * (r0 + r1)
}

fn initial_matrix() -> Matrix2<f64> {
    Matrix2::new(0.5, 0.5, 0.5, -0.5)
}

/// Objective value for `m` on the sample pairs.
pub fn objective(m: &Matrix2<f64>, samples: &[(f64, f64)], cfg: &MOptimizerConfig) -> f64 {
    let fro = match cfg.objective {
        ObjectiveForm::DerivationConsistent => match m.try_inverse() {
            Some(inv) => inv.norm_squared(),
            None => return f64::INFINITY,
        },
        ObjectiveForm::Literal => m.norm_squared(),
    };
    if cfg.lambda == 0.0 {
        return fro;
    }
    let l1: f64 = samples
        .iter()
        .map(|&(a, b)| {
            (m[(0, 0)] * a + m[(0, 1)] * b).abs() + (m[(1, 0)] * a + m[(1, 1)] * b).abs()
        })
        .sum();
    fro + cfg.lambda * l1 / samples.len() as f64
}

fn gradient(m: &Matrix2<f64>, samples: &[(f64, f64)], cfg: &MOptimizerConfig) -> Matrix2<f64> {
    let mut g = match cfg.objective {
        ObjectiveForm::DerivationConsistent => {
            let inv = m.try_inverse().unwrap_or_else(Matrix2::zeros);
            let inv_t = inv.transpose();
            -2.0 * inv_t * inv * inv_t
        }
        ObjectiveForm::Literal => 2.0 * m,
    };
    if cfg.lambda > 0.0 {
        let mut l1 = Matrix2::zeros();
        for &(a, b) in samples {
            let s0 = sign(m[(0, 0)] * a + m[(0, 1)] * b);
            let s1 = sign(m[(1, 0)] * a + m[(1, 1)] * b);
            l1[(0, 0)] += s0 * a;
            l1[(0, 1)] += s0 * b;
            l1[(1, 0)] += s1 * a;
            l1[(1, 1)] += s1 * b;
        }
        g += l1 * (cfg.lambda / samples.len() as f64);
    }
    g
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn project(mut m: Matrix2<f64>, cfg: &MOptimizerConfig, det_floor: f64) -> Matrix2<f64> {
    if cfg.objective == ObjectiveForm::Literal {
        let det = m.determinant().abs();
        if det > 0.0 && det < det_floor {
            m *= (det_floor / det).sqrt();
        }
    }
    let norm = m.norm();
    if norm > cfg.trust_radius {
        m *= cfg.trust_radius / norm;
    }
    m
}

/// Projected (sub)gradient descent with Armijo backtracking, starting from
/// `[[½, ½], [½, −½]]`. Every accepted step lowers the objective.
pub fn optimize_m(samples: &[(f64, f64)], cfg: &MOptimizerConfig) -> Result<MOptimization> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", cfg.lambda)));
    }
    if cfg.lambda > 0.0 && samples.is_empty() {
        return Err(Error::InvalidParameter("no sample pairs".into()));
    }
    let det_floor = initial_matrix().determinant().abs();
    let mut m = project(initial_matrix(), cfg, det_floor);
    let mut j = objective(&m, samples, cfg);
    let mut trace = vec![j];
    let mut step = cfg.step;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let g = gradient(&m, samples, cfg);
        let mut accepted = None;
        let mut t = step;
        while t > 1e-18 {
            let cand = project(m - g * t, cfg, det_floor);
            let jc = objective(&cand, samples, cfg);
            let decrease = g.dot(&(m - cand));
            if jc.is_finite() && jc <= j - 1e-4 * decrease && jc < j {
                accepted = Some((cand, jc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, jc)) = accepted else {
            converged = true;
            break;
        };
        let rel = (j - jc) / j.abs().max(f64::MIN_POSITIVE);
        m = cand;
        j = jc;
        trace.push(j);
        step = t * 2.0;
        if rel < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MOptimization {
        matrix: m,
        converged,
        iterations,
        trace,
    })
}

/// Up to `max` `(w_LH, w_HL)` pairs taken at a regular stride.
pub fn sample_pairs(lh: &Plane<f64>, hl: &Plane<f64>, max: usize) -> Vec<(f64, f64)> {
    let n = lh.len().min(hl.len());
    let stride = n.div_ceil(max.max(1)).max(1);
    (0..n)
        .step_by(stride)
        .map(|i| (lh.data()[i], hl.data()[i]))
        .collect()
}

/// Pearson product-moment correlation of two equally long series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return dim_err("correlation series differ in length");
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two pairs"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-variance channel"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Correlation and order-0 entropy before and after decorrelation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecorrelationStats {
    /// `r(w_LH, w_HL)`
    pub pearson_before: f64,
    /// `r(v_s, v_d)`
    pub pearson_after: f64,
    /// Entropy of `w_LH` in bits/sample.
    pub entropy_before: f64,
    /// Entropy of `v_d` in bits/sample.
    pub entropy_after: f64,
}

/// Real values are rounded to the nearest integer before histogramming.
pub fn measure_decorrelation(
    lh: &[f64],
    hl: &[f64],
    vs: &[f64],
    vd: &[f64],
) -> Result<DecorrelationStats> {
    let round = |v: &[f64]| -> Vec<i32> { v.iter().map(|x| x.round() as i32).collect() };
    Ok(DecorrelationStats {
        pearson_before: pearson(lh, hl)?,
        pearson_after: pearson(vs, vd)?,
        entropy_before: entropy_estimate(&round(lh)),
        entropy_after: entropy_estimate(&round(vd)),
    })
}
