//! Uniform midtread scalar quantisation.

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Validates a step size.
pub fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("quantiser step must be > 0, got {step}")))
    }
}

/// `round(c / Δ)`, ties away from zero.
#[inline]
pub fn quantize_value(c: f64, step: f64) -> i64 {
    (c / step).round() as i64
}

#[inline]
pub fn dequantize_value(q: i32, step: f64) -> f64 {
    q as f64 * step
}

/// Quantises a band. Indices that do not fit an `i32` are an error.
pub fn quantize(band: &Plane<f64>, step: f64) -> Result<Plane<i32>> {
    check_step(step)?;
    let mut out = Vec::with_capacity(band.len());
    for &c in band.data() {
        let q = quantize_value(c, step);
        let q = i32::try_from(q).map_err(|_| Error::CoefficientRange(q))?;
        out.push(q);
    }
    Plane::from_vec(band.width(), band.height(), out)
}

pub fn dequantize(q: &Plane<i32>, step: f64) -> Result<Plane<f64>> {
    check_step(step)?;
    Ok(q.map(|v| dequantize_value(v, step)))
}

/// Step sizes for the four level-1 branches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizationSpec {
    pub ll: f64,
    pub v_s: f64,
    pub v_d: f64,
    pub hh: f64,
}

impl QuantizationSpec {
    pub fn uniform(step: f64) -> Self {
        Self { ll: step, v_s: step, v_d: step, hh: step }
    }

    /// Steps in branch order `[ll, v_s, v_d, hh]`.
    pub fn steps(&self) -> [f64; 4] {
        [self.ll, self.v_s, self.v_d, self.hh]
    }

    pub fn from_steps(s: [f64; 4]) -> Result<Self> {
        for &v in &s {
            check_step(v)?;
        }
        Ok(Self { ll: s[0], v_s: s[1], v_d: s[2], hh: s[3] })
    }

    /// Rounds each step to `f32`, the precision stored in a stream header.
    pub fn to_f32_precision(&self) -> Self {
        let s = self.steps().map(|v| v as f32 as f64);
        Self { ll: s[0], v_s: s[1], v_d: s[2], hh: s[3] }
    }

    pub fn validate(&self) -> Result<()> {
        self.steps().iter().try_for_each(|&v| check_step(v))
    }
}
