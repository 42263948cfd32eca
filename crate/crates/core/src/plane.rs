//! Row-major 2-D sample grids.

use crate::error::{dim_err, Result};

/// A dense row-major grid of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Plane<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return dim_err(format!(
                "{} samples supplied for a {}x{} plane",
                data.len(),
                width,
                height
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn same_shape<U>(&self, other: &Plane<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Plane<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.width {
            for r in 0..self.height {
                out.push(self.data[r * self.width + c]);
            }
        }
        Plane {
            width: self.height,
            height: self.width,
            data: out,
        }
    }

    /// Copies the `width x height` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Plane<T> {
        let mut out = Vec::with_capacity(width * height);
        for r in row..row + height {
            out.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + width]);
        }
        Plane {
            width,
            height,
            data: out,
        }
    }

    /// Writes `src` into this plane with its top-left corner at `(row, col)`.
    pub fn paste(&mut self, row: usize, col: usize, src: &Plane<T>) {
        for r in 0..src.height {
            let dst = (row + r) * self.width + col;
            self.data[dst..dst + src.width].copy_from_slice(src.row(r));
        }
    }

    pub fn flip_rows(&self) -> Plane<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in (0..self.height).rev() {
            out.extend_from_slice(self.row(r));
        }
        Plane {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    pub fn flip_cols(&self) -> Plane<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.height {
            out.extend(self.row(r).iter().rev());
        }
        Plane {
            width: self.width,
            height: self.height,
            data: out,
        }
    }
}

impl Plane<i32> {
    pub fn to_f64(&self) -> Plane<f64> {
        self.map(|v| v as f64)
    }
}

impl Plane<f64> {
    /// Rounds half away from zero.
    pub fn round_to_i32(&self) -> Plane<i32> {
        self.map(|v| v.round() as i32)
    }
}
