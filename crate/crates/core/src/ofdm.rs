//! OFDM transmit/receive chain: per-symbol inverse DFT with a cyclic prefix
//! on every symbol; CP removal and DFT on receive.

use num_complex::Complex;

use crate::channel::{ChannelOperator, ChannelRealization};
use crate::counters::{self, Stage};
use crate::error::{Error, Result};
use crate::frame_grid::GridSpec;
use crate::numerics::{dft_in_place, CMatrix};
use crate::scalar::Real;

/// Time-frequency symbol grid, `M` subcarriers × `N` time slots, indexed `[m, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid<T>(CMatrix<T>);

impl<T: Real> TfGrid<T> {
    pub fn zeros(m: usize, n: usize) -> Self {
        TfGrid(CMatrix::zeros(m, n))
    }

    pub fn from_matrix(values: CMatrix<T>) -> Self {
        TfGrid(values)
    }

    /// `values` in column-major order (subcarrier index fastest).
    pub fn from_vec(m: usize, n: usize, values: Vec<Complex<T>>) -> Result<Self> {
        Ok(TfGrid(CMatrix::from_column_major(m, n, values)?))
    }

    pub fn from_fn(m: usize, n: usize, f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        TfGrid(CMatrix::from_fn(m, n, f))
    }

    pub fn m(&self) -> usize {
        self.0.rows()
    }

    pub fn n(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, m: usize, n: usize) -> Complex<T> {
        self.0.get(m, n)
    }

    pub fn set(&mut self, m: usize, n: usize, v: Complex<T>) {
        self.0.set(m, n, v)
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix<T> {
        &mut self.0
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

    pub(crate) fn check_dims(&self, g: &GridSpec<T>) -> Result<()> {
        if self.m() != g.m() || self.n() != g.n() {
            return Err(Error::invalid(format!(
                "grid is {}x{}, frame geometry expects {}x{}",
                self.m(),
                self.n(),
                g.m(),
                g.n()
            )));
        }
        Ok(())
    }
}

/// Copies the last `cp` samples of every `block`-sample block in front of it.
pub(crate) fn add_cyclic_prefix<T: Real>(s: &[Complex<T>], block: usize, cp: usize) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(s.len() / block * (block + cp));
    for chunk in s.chunks(block) {
        out.extend_from_slice(&chunk[block - cp..]);
        out.extend_from_slice(chunk);
    }
    out
}

/// Drops the first `cp` samples of every `block + cp` sample block.
pub(crate) fn remove_cyclic_prefix<T: Real>(r: &[Complex<T>], block: usize, cp: usize) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(r.len() / (block + cp) * block);
    for chunk in r.chunks(block + cp) {
        out.extend_from_slice(&chunk[cp..]);
    }
    out
}

/// Heisenberg transform with rectangular pulses: per-slot inverse DFT,
/// slots concatenated without prefix.
pub(crate) fn heisenberg<T: Real>(x: &TfGrid<T>) -> Vec<Complex<T>> {
    let mut s = x.as_slice().to_vec();
    for slot in s.chunks_mut(x.m()) {
        dft_in_place(slot, true);
    }
    s
}

/// Wigner transform with rectangular pulses: per-slot forward DFT.
pub(crate) fn wigner<T: Real>(y: &[Complex<T>], m: usize, n: usize) -> TfGrid<T> {
    let mut v = y.to_vec();
    for slot in v.chunks_mut(m) {
        dft_in_place(slot, false);
    }
    TfGrid(CMatrix::from_column_major(m, n, v).expect("length checked by caller"))
}

/// Number of samples in one OFDM frame, CP included.
pub fn ofdm_frame_len<T: Real>(g: &GridSpec<T>) -> usize {
    g.n() * (g.m() + g.cp_len())
}

pub fn ofdm_modulate<T: Real>(x: &TfGrid<T>, g: &GridSpec<T>) -> Result<Vec<Complex<T>>> {
    x.check_dims(g)?;
    let _stage = counters::enter(Stage::OfdmMod);
    Ok(add_cyclic_prefix(&heisenberg(x), g.m(), g.cp_len()))
}

pub fn ofdm_demodulate<T: Real>(r: &[Complex<T>], g: &GridSpec<T>) -> Result<TfGrid<T>> {
    if r.len() != ofdm_frame_len(g) {
        return Err(Error::invalid(format!(
            "OFDM frame has {} samples, expected {}",
            r.len(),
            ofdm_frame_len(g)
        )));
    }
    let _stage = counters::enter(Stage::OfdmMod);
    let y = remove_cyclic_prefix(r, g.m(), g.cp_len());
    Ok(wigner(&y, g.m(), g.n()))
}

/// Per-bin complex gain of a noiseless channel, found by pushing one-hot
/// grids through modulate → channel → demodulate.
///
/// Because every delay fits in the prefix, slots do not leak into each
/// other, so one probe can carry the same subcarrier in every slot at once.
pub fn ofdm_tf_response<T: Real>(ch: &ChannelRealization<T>, g: &GridSpec<T>) -> Result<TfGrid<T>> {
    let op = ChannelOperator::new(ch, g, ofdm_frame_len(g))?;
    let one = Complex::new(T::one(), T::zero());
    let mut resp = TfGrid::zeros(g.m(), g.n());
    for m in 0..g.m() {
        let probe = TfGrid::from_fn(g.m(), g.n(), |mm, _| if mm == m { one } else { Complex::new(T::zero(), T::zero()) });
        let rx = op.apply(&ofdm_modulate(&probe, g)?);
        let y = ofdm_demodulate(&rx, g)?;
        for n in 0..g.n() {
            resp.set(m, n, y.get(m, n));
        }
    }
    Ok(resp)
}
