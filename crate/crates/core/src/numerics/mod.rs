//! Complex-vector primitives, unitary transforms, QAM mapping and seeded
//! randomness.

mod dft;
mod qam;
mod rng;

use num_complex::Complex;

pub use dft::{dft, dft_in_place};
pub(crate) use dft::dft_raw_in_place;
pub use qam::{qam_demap, qam_map, QamConstellation};
pub use rng::{add_noise, awgn, db_to_linear, noise_variance_for, RandomSource};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Baseband samples.
pub type ComplexVector<T> = Vec<Complex<T>>;

/// Dense complex matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_column_major(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r + c * self.rows]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex<T>) {
        self.data[r + c * self.rows] = v;
    }

    pub fn column(&self, c: usize) -> &[Complex<T>] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Complex<T>] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn frobenius_norm(&self) -> T {
        crate::scalar::norm(&self.data)
    }

    /// `A·x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if x.len() != self.cols {
            return Err(Error::invalid("matrix-vector dimension mismatch"));
        }
        let mut y = vec![Complex::new(T::zero(), T::zero()); self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc.re == T::zero() && xc.im == T::zero() {
                continue;
            }
            for (yr, a) in y.iter_mut().zip(self.column(c)) {
                *yr += *a * xc;
            }
        }
        Ok(y)
    }

    /// Applies `f` to every row (a strided lane of length `cols`) in place.
    pub(crate) fn for_each_row(&mut self, mut f: impl FnMut(&mut [Complex<T>])) {
        let mut lane = vec![Complex::new(T::zero(), T::zero()); self.cols];
        for r in 0..self.rows {
            for (c, v) in lane.iter_mut().enumerate() {
                *v = self.data[r + c * self.rows];
            }
            f(&mut lane);
            for (c, v) in lane.iter().enumerate() {
                self.data[r + c * self.rows] = *v;
            }
        }
    }

    pub(crate) fn for_each_column(&mut self, mut f: impl FnMut(&mut [Complex<T>])) {
        for c in 0..self.cols {
            f(self.column_mut(c));
        }
    }
}
