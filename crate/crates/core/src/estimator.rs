//! Matched-filter delay-Doppler estimation with successive interference
//! cancellation and Fibonacci-search refinement.
//!
//! The received echo `r` is correlated against delayed, Doppler-shifted
//! copies of the known transmit frame `s` over the observation window
//! `q ∈ [cp, cp + MN)`:
//!
//! `ref(τ, ν)[q] = s(q − τ) · exp(j2π ν (q − τ)/(MN))`,
//! `metric(τ, ν) = |⟨ref, r⟩|² / ‖ref‖²`.
//!
//! The coarse surface over integer bins costs one length-`MN` transform per
//! delay row. Around its peak the continuous metric is maximised in `τ`
//! then `ν` by Fibonacci search, the gain is the least-squares projection,
//! and the reconstructed echo is subtracted before the next search.

use num_complex::Complex;

use crate::channel::{doppler_ramp, DelayLine};
use crate::counters::{self, Stage};
use crate::error::{Error, Result};
use crate::frame_grid::{delay_to_range, doppler_to_velocity, GridSpec, Propagation};
use crate::numerics::dft_raw_in_place;
use crate::scalar::{energy, inner, Real};

/// Integer delay rows `0..=max_delay_taps` and `N` signed Doppler columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchGrid {
    max_delay_taps: usize,
    doppler_bins: usize,
}

impl SearchGrid {
    /// Full search: delays up to the prefix length, all `N` Doppler bins.
    pub fn for_grid<T: Real>(g: &GridSpec<T>) -> Self {
        SearchGrid {
            max_delay_taps: g.cp_len(),
            doppler_bins: g.n(),
        }
    }

    pub fn new<T: Real>(max_delay_taps: usize, g: &GridSpec<T>) -> Result<Self> {
        if max_delay_taps > g.cp_len() {
            return Err(Error::invalid(format!(
                "search reaches {max_delay_taps} taps but the prefix is {} samples",
                g.cp_len()
            )));
        }
        Ok(SearchGrid {
            max_delay_taps,
            doppler_bins: g.n(),
        })
    }

    pub fn max_delay_taps(&self) -> usize {
        self.max_delay_taps
    }

    pub fn delay_rows(&self) -> usize {
        self.max_delay_taps + 1
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    /// Signed Doppler bin of column `c`, in `(−N/2, N/2]`.
    pub fn signed_bin(&self, c: usize) -> i64 {
        let n = self.doppler_bins as i64;
        let c = c as i64;
        if c > n / 2 {
            c - n
        } else {
            c
        }
    }

    /// Column of a signed Doppler bin (taken modulo `N`).
    pub fn column(&self, k: i64) -> usize {
        k.rem_euclid(self.doppler_bins as i64) as usize
    }
}

/// Matched-filter metric over a [`SearchGrid`], row-major by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSurface<T> {
    grid: SearchGrid,
    values: Vec<T>,
}

impl<T: Real> MetricSurface<T> {
    pub fn grid(&self) -> SearchGrid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Metric at delay row `l` and signed Doppler bin `k`.
    pub fn get(&self, l: usize, k: i64) -> T {
        self.values[l * self.grid.doppler_bins + self.grid.column(k)]
    }

    /// `(l, k, value)` of the largest cell; the first in row-major order wins ties.
    pub fn peak(&self) -> (usize, i64, T) {
        let (idx, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let n = self.grid.doppler_bins;
        (idx / n, self.grid.signed_bin(idx % n), v)
    }

    pub fn median(&self) -> T {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
        }
    }
}

fn check_lengths<T: Real>(r: &[Complex<T>], s_ref: &[Complex<T>], g: &GridSpec<T>) -> Result<()> {
    if r.len() != s_ref.len() {
        return Err(Error::invalid(format!(
            "received {} samples but reference has {}",
            r.len(),
            s_ref.len()
        )));
    }
    if r.len() < g.cp_len() + g.mn() {
        return Err(Error::invalid(format!(
            "{} samples cannot hold a {}-sample observation window after the prefix",
            r.len(),
            g.mn()
        )));
    }
    Ok(())
}

/// Coarse matched-filter surface `|⟨ref(l, k), r⟩|² / ‖ref(l, k)‖²`.
///
/// Each delay row is one length-`MN` DFT of `r[q]·conj(s[q − l])` over the
/// observation window; the `N` signed Doppler bins are read from it.
pub fn mf_metric<T: Real>(
    r: &[Complex<T>],
    s_ref: &[Complex<T>],
    grid: &SearchGrid,
    g: &GridSpec<T>,
) -> Result<MetricSurface<T>> {
    check_lengths(r, s_ref, g)?;
    if grid.doppler_bins != g.n() || grid.max_delay_taps > g.cp_len() {
        return Err(Error::invalid("search grid does not belong to this frame geometry"));
    }
    let _stage = counters::enter(Stage::MfMetric);
    let (cp, mn, n) = (g.cp_len(), g.mn(), g.n());
    let mut values = Vec::with_capacity(grid.delay_rows() * n);
    let mut z = vec![Complex::new(T::zero(), T::zero()); mn];
    for l in 0..grid.delay_rows() {
        let window = &s_ref[cp - l..cp - l + mn];
        let ref_energy = energy(window);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = r[cp + i] * window[i].conj();
        }
        counters::record(Stage::MfMetric, 2 * mn as u64);
        dft_raw_in_place(&mut z, false);
        for c in 0..n {
            let k = grid.signed_bin(c);
            let v = z[k.rem_euclid(mn as i64) as usize].norm_sqr();
            values.push(if ref_energy > T::zero() { v / ref_energy } else { T::zero() });
        }
    }
    Ok(MetricSurface { grid: *grid, values })
}

/// Maximises `f` on `[lo, hi]` by Fibonacci search until the bracket is no
/// wider than `tol`. Returns the best evaluated point and its value.
pub fn fibonacci_maximize<T: Real>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> (T, T) {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if b - a <= tol {
        let x = (a + b) / T::lit(2.0);
        return (x, f(x));
    }
    let ratio = ((b - a) / tol).to_f64_lossy();
    let mut fib: Vec<f64> = vec![1.0, 1.0];
    while *fib.last().expect("non-empty") < ratio {
        let k = fib.len();
        fib.push(fib[k - 1] + fib[k - 2]);
    }
    let mut n = fib.len() - 1;
    let frac = |num: usize, den: usize| T::lit(fib[num] / fib[den]);
    let mut x1 = a + frac(n - 2, n) * (b - a);
    let mut x2 = a + frac(n - 1, n) * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while n > 2 {
        n -= 1;
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + frac(n - 1, n) * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + frac(n - 2, n) * (b - a);
            f1 = f(x1);
        }
    }
    if f2 > f1 {
        (x2, f2)
    } else {
        (x1, f1)
    }
}

/// One detected echo.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTarget<T> {
    pub gain: Complex<T>,
    /// Refined delay in taps and seconds.
    pub delay_taps: T,
    pub delay_s: T,
    /// Refined signed Doppler in bins and hertz.
    pub doppler_taps: T,
    pub doppler_hz: T,
    pub range_m: T,
    pub velocity_mps: T,
    /// Integer peak of the coarse surface: delay row and signed Doppler bin.
    pub coarse_bins: (usize, i64),
    /// Coarse surface value at the detection.
    pub metric_peak: T,
    /// Zero-based cancellation step that produced this target.
    pub sic_step: usize,
}

/// Estimator knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub max_targets: usize,
    /// A peak must exceed `stop_factor × median` of the surface.
    pub stop_factor: f64,
    /// A peak must also exceed this fraction of the first peak.
    pub min_peak_ratio: f64,
    /// Fractional refinement on/off (off returns the coarse bins).
    pub refine: bool,
    pub refine_sweeps: usize,
    /// Final bracket width of each 1-D search, in bins.
    pub refine_tol: f64,
    /// Re-fits of all earlier targets after each new detection.
    pub refit_passes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_targets: 8,
            stop_factor: 24.0,
            min_peak_ratio: 1e-4,
            refine: true,
            refine_sweeps: 2,
            refine_tol: 1e-3,
            refit_passes: 2,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_targets == 0 {
            return Err(Error::invalid("max_targets must be at least 1"));
        }
        if !(self.stop_factor > 1.0) {
            return Err(Error::invalid(format!("stop_factor {} must exceed 1", self.stop_factor)));
        }
        if !(self.min_peak_ratio >= 0.0 && self.min_peak_ratio < 1.0) {
            return Err(Error::invalid("min_peak_ratio must lie in [0, 1)"));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::invalid("refine_tol must be positive"));
        }
        Ok(())
    }
}

/// Reference echo `ref(τ, ν)` over the whole frame.
struct Reference<'a, T> {
    line: &'a DelayLine<T>,
    mn: usize,
    len: usize,
    window: std::ops::Range<usize>,
}

impl<T: Real> Reference<'_, T> {
    fn delayed(&self, tau: T) -> Vec<Complex<T>> {
        self.line.delayed(tau)
    }

    fn echo(&self, delayed: &[Complex<T>], tau: T, nu: T) -> Vec<Complex<T>> {
        let ramp = doppler_ramp(nu, tau, self.mn, self.len);
        delayed.iter().zip(&ramp).map(|(a, b)| a * b).collect()
    }

    /// `(|⟨ref, r⟩|² / ‖ref‖², ⟨ref, r⟩ / ‖ref‖²)` over the window.
    fn score(&self, echo: &[Complex<T>], r: &[Complex<T>]) -> (T, Complex<T>) {
        let w = self.window.clone();
        let e = energy(&echo[w.clone()]);
        if e <= T::zero() {
            return (T::zero(), Complex::new(T::zero(), T::zero()));
        }
        let c = inner(&echo[w.clone()], &r[w]);
        (c.norm_sqr() / e, c.unscale(e))
    }
}

/// Detects up to `cfg.max_targets` echoes of `s_ref` in `r` by SIC.
///
/// Returns targets ordered by descending coarse metric peak; an empty list
/// means the first peak already failed the stop rule.
pub fn estimate_targets<T: Real>(
    r: &[Complex<T>],
    s_ref: &[Complex<T>],
    grid: &SearchGrid,
    g: &GridSpec<T>,
    cfg: &EstimatorConfig,
) -> Result<Vec<EstimatedTarget<T>>> {
    cfg.validate()?;
    check_lengths(r, s_ref, g)?;
    let line = {
        let _stage = counters::enter(Stage::Refinement);
        DelayLine::new(s_ref, g.cp_len())
    };
    let reference = Reference {
        line: &line,
        mn: g.mn(),
        len: r.len(),
        window: g.cp_len()..g.cp_len() + g.mn(),
    };
    let mut residual = r.to_vec();
    // (coarse bins, peak, tau, nu, alpha, echo) per detection, in SIC order
    let mut found: Vec<Detection<T>> = Vec::new();
    let mut first_peak: Option<T> = None;
    for _ in 0..cfg.max_targets {
        let surface = mf_metric(&residual, s_ref, grid, g)?;
        let (l0, k0, peak) = surface.peak();
        if !(peak > T::zero()) || peak < T::lit(cfg.stop_factor) * surface.median() {
            break;
        }
        match first_peak {
            None => first_peak = Some(peak),
            Some(p0) if peak < T::lit(cfg.min_peak_ratio) * p0 => break,
            Some(_) => {}
        }
        let _stage = counters::enter(Stage::Refinement);
        let (tau, nu, alpha) = refine(&reference, &residual, l0, k0, grid, cfg);
        let echo = reference.echo(&reference.delayed(tau), tau, nu);
        subtract(&mut residual, alpha, &echo);
        found.push(Detection { bins: (l0, k0), peak, tau, nu, alpha, echo });
        // Earlier estimates were refined while this echo still interfered;
        // re-fit each one against the residual of all the others.
        if found.len() > 1 {
            for _ in 0..cfg.refit_passes {
                for d in found.iter_mut() {
                    subtract(&mut residual, -d.alpha, &d.echo);
                    let (tau, nu, alpha) = refine(&reference, &residual, d.bins.0, d.bins.1, grid, cfg);
                    d.echo = reference.echo(&reference.delayed(tau), tau, nu);
                    d.tau = tau;
                    d.nu = nu;
                    d.alpha = alpha;
                    subtract(&mut residual, alpha, &d.echo);
                }
            }
        }
    }
    let mut targets = found
        .into_iter()
        .enumerate()
        .map(|(step, d)| physical_target(g, d.alpha, d.tau, d.nu, d.bins, d.peak, step))
        .collect::<Result<Vec<_>>>()?;
    targets.sort_by(|a, b| b.metric_peak.partial_cmp(&a.metric_peak).unwrap_or(std::cmp::Ordering::Equal));
    Ok(targets)
}

struct Detection<T> {
    bins: (usize, i64),
    peak: T,
    tau: T,
    nu: T,
    alpha: Complex<T>,
    echo: Vec<Complex<T>>,
}

fn subtract<T: Real>(residual: &mut [Complex<T>], alpha: Complex<T>, echo: &[Complex<T>]) {
    for (x, e) in residual.iter_mut().zip(echo) {
        *x -= alpha * e;
    }
    counters::record_active(residual.len() as u64);
}

fn refine<T: Real>(
    reference: &Reference<'_, T>,
    residual: &[Complex<T>],
    l0: usize,
    k0: i64,
    grid: &SearchGrid,
    cfg: &EstimatorConfig,
) -> (T, T, Complex<T>) {
    let coarse_tau = T::from_usize_lossy(l0);
    let coarse_nu = T::lit(k0 as f64);
    let mut delayed = reference.delayed(coarse_tau);
    let (coarse_score, coarse_alpha) = reference.score(&reference.echo(&delayed, coarse_tau, coarse_nu), residual);
    if !cfg.refine {
        return (coarse_tau, coarse_nu, coarse_alpha);
    }
    let one = T::one();
    let tol = T::lit(cfg.refine_tol);
    let tau_lo = (coarse_tau - one).max(T::zero());
    let tau_hi = (coarse_tau + one).min(T::from_usize_lossy(grid.max_delay_taps()));
    let (mut tau, mut nu) = (coarse_tau, coarse_nu);
    let mut best = coarse_score;
    for _ in 0..cfg.refine_sweeps {
        let (t, s) = fibonacci_maximize(
            |t| reference.score(&reference.echo(&reference.delayed(t), t, nu), residual).0,
            tau_lo,
            tau_hi,
            tol,
        );
        if s > best {
            best = s;
            tau = t;
        }
        delayed = reference.delayed(tau);
        let (v, s) = fibonacci_maximize(
            |v| reference.score(&reference.echo(&delayed, tau, v), residual).0,
            coarse_nu - one,
            coarse_nu + one,
            tol,
        );
        if s > best {
            best = s;
            nu = v;
        }
    }
    let (_, alpha) = reference.score(&reference.echo(&delayed, tau, nu), residual);
    (tau, nu, alpha)
}

fn physical_target<T: Real>(
    g: &GridSpec<T>,
    gain: Complex<T>,
    delay_taps: T,
    doppler_taps: T,
    coarse_bins: (usize, i64),
    metric_peak: T,
    sic_step: usize,
) -> Result<EstimatedTarget<T>> {
    let delay_s = g.taps_to_delay(delay_taps);
    let doppler_hz = g.taps_to_doppler(doppler_taps);
    Ok(EstimatedTarget {
        gain,
        delay_taps,
        delay_s,
        doppler_taps,
        doppler_hz,
        range_m: delay_to_range(delay_s, g, Propagation::Echo)?,
        velocity_mps: doppler_to_velocity(doppler_hz, g, Propagation::Echo),
        coarse_bins,
        metric_peak,
        sic_step,
    })
}

/// Window energy of `r` after subtracting the reconstructed echoes of
/// `targets`, applied in the given order.
pub fn residual_energy<T: Real>(
    r: &[Complex<T>],
    targets: &[EstimatedTarget<T>],
    s_ref: &[Complex<T>],
    g: &GridSpec<T>,
) -> Result<T> {
    check_lengths(r, s_ref, g)?;
    let line = DelayLine::new(s_ref, g.cp_len());
    let reference = Reference {
        line: &line,
        mn: g.mn(),
        len: r.len(),
        window: g.cp_len()..g.cp_len() + g.mn(),
    };
    let mut residual = r.to_vec();
    for t in targets {
        let echo = reference.echo(&reference.delayed(t.delay_taps), t.delay_taps, t.doppler_taps);
        for (x, e) in residual.iter_mut().zip(&echo) {
            *x -= t.gain * e;
        }
    }
    Ok(energy(&residual[reference.window]))
}
