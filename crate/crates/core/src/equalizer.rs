//! Genie-CSI symbol detection.
//!
//! Two equivalent linear MMSE detectors are provided:
//!
//! * [`MmseDetector`] works on the dense `MN × MN` [`EffectiveChannel`]
//!   obtained by probing modulate → channel → demodulate with every basis
//!   symbol. It is the reference and is practical up to a few hundred symbols.
//! * [`TimeDomainDetector`] solves the same problem in the sampled time
//!   domain. The modem transforms (without prefix) form a unitary `P`, so
//!   `H = Pᴴ H_t P` and `(HᴴH + σ²I)⁻¹Hᴴ y = Pᴴ (H_tᴴH_t + σ²I)⁻¹ H_tᴴ y_t`.
//!   `H_t` is sparse for integer-delay channels and the Gram matrix is banded
//!   (block-diagonal for OFDM, cyclically banded for OTFS), so an envelope
//!   Cholesky factorization makes full-frame MMSE affordable at `MN = 2048`.

use num_complex::Complex;

use crate::channel::{ChannelOperator, ChannelRealization};
use crate::counters::{self, Stage};
use crate::error::{Error, Result};
use crate::frame_grid::GridSpec;
use crate::numerics::{qam_demap, CMatrix, QamConstellation};
use crate::ofdm::{add_cyclic_prefix, remove_cyclic_prefix, TfGrid};
use crate::scalar::Real;
use crate::waveform::Waveform;

/// Domain in which an effective channel maps symbols to observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Tf,
    Dd,
}

/// Dense symbol-to-observation matrix of one waveform over one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel<T> {
    matrix: CMatrix<T>,
    waveform: Waveform,
}

impl<T: Real> EffectiveChannel<T> {
    pub fn from_matrix(matrix: CMatrix<T>, waveform: Waveform) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::invalid("effective channel must be square"));
        }
        Ok(EffectiveChannel { matrix, waveform })
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    pub fn domain(&self) -> Domain {
        match self.waveform {
            Waveform::Ofdm => Domain::Tf,
            Waveform::Otfs => Domain::Dd,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Noiseless observation of a vectorized frame.
    pub fn apply(&self, x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.matrix.mul_vec(x)
    }
}

/// Probes the noiseless chain with each of the `MN` basis symbols.
pub fn probe_effective_channel<T: Real>(
    waveform: Waveform,
    ch: &ChannelRealization<T>,
    g: &GridSpec<T>,
) -> Result<EffectiveChannel<T>> {
    let op = ChannelOperator::new(ch, g, waveform.frame_len(g))?;
    let mn = g.mn();
    let zero = Complex::new(T::zero(), T::zero());
    let mut matrix = CMatrix::zeros(mn, mn);
    let mut e = vec![zero; mn];
    for j in 0..mn {
        e[j] = Complex::new(T::one(), T::zero());
        let col = waveform.demodulate(&op.apply(&waveform.modulate(&e, g)?), g)?;
        matrix.column_mut(j).copy_from_slice(&col);
        e[j] = zero;
    }
    Ok(EffectiveChannel { matrix, waveform })
}

/// Relative pivot size below which a Gram matrix counts as singular.
const PIVOT_TOL: f64 = 1e-12;

fn pivot_floor<T: Real>(max_diag: T, dim: usize) -> T {
    max_diag * T::lit(PIVOT_TOL) * T::from_usize_lossy(dim.max(1))
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix, stored by
/// rows as an envelope: row `i` keeps columns `first[i]..=i`.
#[derive(Debug, Clone)]
struct EnvelopeCholesky<T> {
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<Complex<T>>,
}

impl<T: Real> EnvelopeCholesky<T> {
    fn zeros(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            offset.push(total);
            total += i + 1 - f;
        }
        offset.push(total);
        EnvelopeCholesky {
            first,
            offset,
            values: vec![Complex::new(T::zero(), T::zero()); total],
        }
    }

    fn dim(&self) -> usize {
        self.first.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.offset[i] + j - self.first[i]
    }

    fn add(&mut self, i: usize, j: usize, v: Complex<T>) {
        let k = self.idx(i, j);
        self.values[k] += v;
    }

    /// Factors the stored lower triangle in place.
    fn factor(&mut self) -> Result<()> {
        let n = self.dim();
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(self.values[self.idx(i, i)].re));
        let floor = pivot_floor(max_diag, n);
        let mut ops = 0u64;
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let (ri, rj) = (self.idx(i, start), self.idx(j, start));
                let len = j - start;
                let mut s = self.values[self.idx(i, j)];
                for t in 0..len {
                    s -= self.values[ri + t] * self.values[rj + t].conj();
                }
                ops += len as u64;
                if j < i {
                    let d = self.values[self.idx(j, j)].re;
                    let k = self.idx(i, j);
                    self.values[k] = s.unscale(d);
                } else {
                    if !(s.re > floor) {
                        counters::record(Stage::Mmse, ops);
                        return Err(Error::RankDeficient { pivot: i });
                    }
                    let k = self.idx(i, i);
                    self.values[k] = Complex::new(s.re.sqrt(), T::zero());
                }
            }
        }
        counters::record(Stage::Mmse, ops + n as u64);
        Ok(())
    }

    /// Solves `L Lᴴ x = b`.
    fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim();
        let mut z = b.to_vec();
        let mut ops = 0u64;
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = z[i];
            for (t, &l) in row[..i - fi].iter().enumerate() {
                s -= l * z[fi + t];
            }
            ops += (i - fi) as u64 + 1;
            z[i] = s.unscale(row[i - fi].re);
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let xi = z[i].unscale(row[i - fi].re);
            z[i] = xi;
            for (t, &l) in row[..i - fi].iter().enumerate() {
                z[fi + t] -= l.conj() * xi;
            }
            ops += (i - fi) as u64 + 1;
        }
        counters::record(Stage::Mmse, ops);
        z
    }
}

/// Soft estimates and hard bit decisions for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub estimates: Vec<Complex<T>>,
    pub bits: Vec<bool>,
}

/// Dense LMMSE `x̂ = (HᴴH + σ²I)⁻¹Hᴴy`, factored once per channel and noise level.
#[derive(Debug, Clone)]
pub struct MmseDetector<T> {
    h: EffectiveChannel<T>,
    chol: EnvelopeCholesky<T>,
}

impl<T: Real> MmseDetector<T> {
    pub fn new(h: &EffectiveChannel<T>, noise_var: f64) -> Result<Self> {
        check_noise_var(noise_var)?;
        let _stage = counters::enter(Stage::Mmse);
        let n = h.dim();
        let mut chol = EnvelopeCholesky::zeros(vec![0; n]);
        let a = h.matrix();
        for i in 0..n {
            for j in 0..=i {
                let v = crate::scalar::inner(a.column(i), a.column(j));
                chol.add(i, j, v);
            }
            chol.add(i, i, Complex::new(T::lit(noise_var), T::zero()));
        }
        counters::record(Stage::Mmse, (n * (n + 1) / 2 * n) as u64);
        chol.factor()?;
        Ok(MmseDetector { h: h.clone(), chol })
    }

    pub fn equalize(&self, y: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let n = self.h.dim();
        if y.len() != n {
            return Err(Error::invalid(format!("observation has {} entries, channel {}", y.len(), n)));
        }
        let _stage = counters::enter(Stage::Mmse);
        let a = self.h.matrix();
        let rhs: Vec<Complex<T>> = (0..n).map(|j| crate::scalar::inner(a.column(j), y)).collect();
        counters::record(Stage::Mmse, (n * n) as u64);
        Ok(self.chol.solve(&rhs))
    }

    pub fn detect(&self, y: &[Complex<T>], c: &QamConstellation<T>) -> Result<Detection<T>> {
        let estimates = self.equalize(y)?;
        let bits = qam_demap(&estimates, c);
        Ok(Detection { estimates, bits })
    }
}

/// One-shot dense LMMSE detection followed by hard slicing.
pub fn mmse_detect<T: Real>(
    y: &[Complex<T>],
    h: &EffectiveChannel<T>,
    noise_var: f64,
    c: &QamConstellation<T>,
) -> Result<Detection<T>> {
    MmseDetector::new(h, noise_var)?.detect(y, c)
}

fn check_noise_var(noise_var: f64) -> Result<()> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be finite and ≥ 0")));
    }
    Ok(())
}

/// Time-domain LMMSE over a prefix-protected frame; exact equivalent of
/// [`MmseDetector`] on the probed effective channel.
#[derive(Debug, Clone)]
pub struct TimeDomainDetector<T> {
    waveform: Waveform,
    grid: GridSpec<T>,
    /// Nonzeros of each column of `H_t`, by row.
    columns: Vec<Vec<(usize, Complex<T>)>>,
    chol: EnvelopeCholesky<T>,
}

impl<T: Real> TimeDomainDetector<T> {
    pub fn new(waveform: Waveform, ch: &ChannelRealization<T>, g: &GridSpec<T>, noise_var: f64) -> Result<Self> {
        check_noise_var(noise_var)?;
        let op = ChannelOperator::new(ch, g, waveform.frame_len(g))?;
        let _stage = counters::enter(Stage::Mmse);
        let columns = time_domain_columns(waveform, &op, g);
        let mn = g.mn();

        let mut rows: Vec<Vec<(usize, Complex<T>)>> = vec![Vec::new(); mn];
        for (j, col) in columns.iter().enumerate() {
            for &(p, v) in col {
                rows[p].push((j, v));
            }
        }
        let mut first: Vec<usize> = (0..mn).collect();
        for row in &rows {
            let lo = row.iter().map(|e| e.0).min().unwrap_or(0);
            for &(i, _) in row {
                first[i] = first[i].min(lo);
            }
        }
        let mut chol = EnvelopeCholesky::zeros(first);
        let mut ops = 0u64;
        for row in &rows {
            for &(i, vi) in row {
                for &(j, vj) in row {
                    if j <= i {
                        chol.add(i, j, vi.conj() * vj);
                        ops += 1;
                    }
                }
            }
        }
        for i in 0..mn {
            chol.add(i, i, Complex::new(T::lit(noise_var), T::zero()));
        }
        counters::record(Stage::Mmse, ops);
        chol.factor()?;
        Ok(TimeDomainDetector {
            waveform,
            grid: *g,
            columns,
            chol,
        })
    }

    /// LMMSE estimate of the vectorized symbol frame from a received frame
    /// (prefix included).
    pub fn equalize(&self, r: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let g = &self.grid;
        let frame = self.waveform.frame_len(g);
        if r.len() != frame {
            return Err(Error::invalid(format!("received {} samples, frame is {}", r.len(), frame)));
        }
        let block = self.waveform.block_len(g);
        let x_t = {
            let _stage = counters::enter(Stage::Mmse);
            let y = remove_cyclic_prefix(r, block, g.cp_len());
            let mut ops = 0u64;
            let rhs: Vec<Complex<T>> = self
                .columns
                .iter()
                .map(|col| {
                    ops += col.len() as u64;
                    col.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &(p, v)| acc + v.conj() * y[p])
                })
                .collect();
            counters::record(Stage::Mmse, ops);
            self.chol.solve(&rhs)
        };
        self.waveform.demodulate(&add_cyclic_prefix(&x_t, block, g.cp_len()), g)
    }

    pub fn detect(&self, r: &[Complex<T>], c: &QamConstellation<T>) -> Result<Detection<T>> {
        let estimates = self.equalize(r)?;
        let bits = qam_demap(&estimates, c);
        Ok(Detection { estimates, bits })
    }
}

/// Columns of `H_t = removeCP ∘ channel ∘ addCP` as sparse lists.
fn time_domain_columns<T: Real>(
    waveform: Waveform,
    op: &ChannelOperator<T>,
    g: &GridSpec<T>,
) -> Vec<Vec<(usize, Complex<T>)>> {
    let mn = g.mn();
    let cp = g.cp_len();
    let block = waveform.block_len(g);
    let ext = block + cp;
    let one = Complex::new(T::one(), T::zero());
    let zero = Complex::new(T::zero(), T::zero());
    let to_row = |q: usize| {
        let (b, off) = (q / ext, q % ext);
        (off >= cp).then(|| b * block + off - cp)
    };
    (0..mn)
        .map(|j| {
            let (b, off) = (j / block, j % block);
            let mut input = vec![(b * ext + cp + off, one)];
            if off >= block - cp {
                input.insert(0, (b * ext + off + cp - block, one));
            }
            let mut col: Vec<(usize, Complex<T>)> = match op.apply_sparse(&input) {
                Some(out) => out.into_iter().filter_map(|(q, v)| to_row(q).map(|p| (p, v))).collect(),
                None => {
                    let mut s = vec![zero; op.len()];
                    for &(q, v) in &input {
                        s[q] = v;
                    }
                    op.apply(&s)
                        .into_iter()
                        .enumerate()
                        .filter_map(|(q, v)| to_row(q).map(|p| (p, v)))
                        .collect()
                }
            };
            col.retain(|e| e.1 != zero);
            col
        })
        .collect()
}

/// Per-bin MMSE scaling and the bins that had to be erased.
#[derive(Debug, Clone, PartialEq)]
pub struct OneTapOutput<T> {
    pub grid: TfGrid<T>,
    /// Column-major flags for bins with `|H| = 0` and `σ² = 0` (set to zero).
    pub erased: Vec<bool>,
}

/// `X̂ = conj(H)·Y / (|H|² + σ²)` element-wise.
pub fn one_tap_equalize<T: Real>(y: &TfGrid<T>, hf: &TfGrid<T>, noise_var: f64) -> Result<OneTapOutput<T>> {
    if y.m() != hf.m() || y.n() != hf.n() {
        return Err(Error::invalid("grid and response dimensions differ"));
    }
    check_noise_var(noise_var)?;
    let s2 = T::lit(noise_var);
    let zero = Complex::new(T::zero(), T::zero());
    let mut erased = vec![false; y.as_slice().len()];
    let values = y
        .as_slice()
        .iter()
        .zip(hf.as_slice())
        .enumerate()
        .map(|(i, (&yv, &h))| {
            let den = h.norm_sqr() + s2;
            if den == T::zero() {
                erased[i] = true;
                zero
            } else {
                h.conj() * yv / den
            }
        })
        .collect();
    Ok(OneTapOutput {
        grid: TfGrid::from_vec(y.m(), y.n(), values)?,
        erased,
    })
}
