//! OTFS transmit/receive chain: ISFFT → Heisenberg → one frame-level cyclic
//! prefix on transmit; prefix removal → Wigner → SFFT on receive.

use num_complex::Complex;

use crate::counters::{self, Stage};
use crate::error::{Error, Result};
use crate::frame_grid::GridSpec;
use crate::numerics::{dft_in_place, CMatrix};
use crate::ofdm::{add_cyclic_prefix, heisenberg, remove_cyclic_prefix, wigner, TfGrid};
use crate::scalar::Real;

/// Delay-Doppler symbol frame, `M` delay bins × `N` Doppler bins, indexed `[l, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame<T>(CMatrix<T>);

impl<T: Real> DdFrame<T> {
    pub fn zeros(m: usize, n: usize) -> Self {
        DdFrame(CMatrix::zeros(m, n))
    }

    pub fn from_matrix(values: CMatrix<T>) -> Self {
        DdFrame(values)
    }

    /// `values` in column-major order (delay index fastest).
    pub fn from_vec(m: usize, n: usize, values: Vec<Complex<T>>) -> Result<Self> {
        Ok(DdFrame(CMatrix::from_column_major(m, n, values)?))
    }

    pub fn from_fn(m: usize, n: usize, f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        DdFrame(CMatrix::from_fn(m, n, f))
    }

    pub fn m(&self) -> usize {
        self.0.rows()
    }

    pub fn n(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, l: usize, k: usize) -> Complex<T> {
        self.0.get(l, k)
    }

    pub fn set(&mut self, l: usize, k: usize, v: Complex<T>) {
        self.0.set(l, k, v)
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.0
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        self.0.as_slice()
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.0.into_vec()
    }

    pub fn frobenius_norm(&self) -> T {
        self.0.frobenius_norm()
    }

    /// `(l, k)` of the largest-magnitude bin; first one wins on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let m = self.m();
        let (idx, _) = self
            .as_slice()
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, v)| {
                let a = v.norm_sqr();
                if a > bv {
                    (i, a)
                } else {
                    (bi, bv)
                }
            });
        (idx % m, idx / m)
    }

    fn check_dims(&self, g: &GridSpec<T>) -> Result<()> {
        if self.m() != g.m() || self.n() != g.n() {
            return Err(Error::invalid(format!(
                "frame is {}x{}, geometry expects {}x{}",
                self.m(),
                self.n(),
                g.m(),
                g.n()
            )));
        }
        Ok(())
    }
}

/// `X_tf[m,n] = (1/√MN) Σ_{l,k} X[l,k] e^{j2π(nk/N − ml/M)}`, computed as a
/// forward DFT over delay followed by an inverse DFT over Doppler.
pub fn isfft<T: Real>(x: &DdFrame<T>) -> TfGrid<T> {
    let mut a = x.0.clone();
    a.for_each_column(|col| dft_in_place(col, false));
    a.for_each_row(|row| dft_in_place(row, true));
    TfGrid::from_matrix(a)
}

/// Exact inverse of [`isfft`].
pub fn sfft<T: Real>(y: &TfGrid<T>) -> DdFrame<T> {
    let mut a = y.matrix().clone();
    a.for_each_row(|row| dft_in_place(row, false));
    a.for_each_column(|col| dft_in_place(col, true));
    DdFrame(a)
}

/// Number of samples in one OTFS frame, prefix included.
pub fn otfs_frame_len<T: Real>(g: &GridSpec<T>) -> usize {
    g.mn() + g.cp_len()
}

pub fn otfs_modulate<T: Real>(x: &DdFrame<T>, g: &GridSpec<T>) -> Result<Vec<Complex<T>>> {
    x.check_dims(g)?;
    let _stage = counters::enter(Stage::OtfsMod);
    let s = heisenberg(&isfft(x));
    Ok(add_cyclic_prefix(&s, g.mn(), g.cp_len()))
}

pub fn otfs_demodulate<T: Real>(r: &[Complex<T>], g: &GridSpec<T>) -> Result<DdFrame<T>> {
    if r.len() != otfs_frame_len(g) {
        return Err(Error::invalid(format!(
            "OTFS frame has {} samples, expected {}",
            r.len(),
            otfs_frame_len(g)
        )));
    }
    let _stage = counters::enter(Stage::OtfsMod);
    let y = remove_cyclic_prefix(r, g.mn(), g.cp_len());
    Ok(sfft(&wigner(&y, g.m(), g.n())))
}
