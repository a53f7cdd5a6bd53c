//! Delay-Doppler multipath channel applied to sampled baseband.
//!
//! Path `i` contributes `α_i · s(q − l_i) · exp(j2π k_i (q − l_i)/(MN))`,
//! with `l_i` in samples and `k_i` in Doppler bins of `1/(N·T)` Hz. Delays
//! are linear (the first `l_i` output samples see nothing), so the cyclic
//! prefix is what turns them circular after CP removal. Fractional delays
//! are band-limited: the signal is zero-padded, phase-ramped in the DFT
//! domain and truncated back.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::frame_grid::{range_to_delay, velocity_to_doppler, GridSpec, Propagation};
use crate::numerics::{add_noise, dft_raw_in_place, noise_variance_for, RandomSource};
use crate::scalar::{cis, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath<T> {
    pub gain: Complex<T>,
    /// Delay in samples; may be fractional.
    pub delay_taps: T,
    /// Doppler in bins of `1/(N·T)` Hz; may be fractional or negative.
    pub doppler_taps: T,
}

impl<T: Real> ChannelPath<T> {
    pub fn new(gain: Complex<T>, delay_taps: T, doppler_taps: T) -> Self {
        ChannelPath {
            gain,
            delay_taps,
            doppler_taps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    paths: Vec<ChannelPath<T>>,
    /// `+inf` means noiseless.
    snr_db: f64,
}

impl<T: Real> ChannelRealization<T> {
    /// Noiseless channel with at least one path.
    pub fn new(paths: Vec<ChannelPath<T>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::invalid("channel needs at least one path"));
        }
        for (i, p) in paths.iter().enumerate() {
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return Err(Error::invalid(format!("path {i} has a non-finite gain")));
            }
            if !(p.delay_taps >= T::zero()) || !p.delay_taps.is_finite() {
                return Err(Error::invalid(format!("path {i} has delay {} taps", p.delay_taps)));
            }
            if !p.doppler_taps.is_finite() {
                return Err(Error::invalid(format!("path {i} has a non-finite Doppler")));
            }
        }
        Ok(ChannelRealization {
            paths,
            snr_db: f64::INFINITY,
        })
    }

    /// Like [`ChannelRealization::new`], additionally requiring every pair of
    /// paths to be at least one bin apart in delay or in Doppler.
    pub fn new_resolvable(paths: Vec<ChannelPath<T>>) -> Result<Self> {
        for i in 0..paths.len() {
            for j in 0..i {
                let dl = (paths[i].delay_taps - paths[j].delay_taps).abs();
                let dk = (paths[i].doppler_taps - paths[j].doppler_taps).abs();
                if dl < T::one() && dk < T::one() {
                    return Err(Error::invalid(format!("paths {j} and {i} are not resolvable")));
                }
            }
        }
        Self::new(paths)
    }

    /// Single unit path, no delay or Doppler.
    pub fn identity() -> Self {
        Self::new(vec![ChannelPath::new(Complex::new(T::one(), T::zero()), T::zero(), T::zero())])
            .expect("identity channel is valid")
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn paths(&self) -> &[ChannelPath<T>] {
        &self.paths
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn max_delay_taps(&self) -> T {
        self.paths.iter().fold(T::zero(), |m, p| m.max(p.delay_taps))
    }

    fn check_prefix(&self, g: &GridSpec<T>) -> Result<()> {
        let max = self.max_delay_taps();
        if max > T::from_usize_lossy(g.cp_len()) {
            return Err(Error::contract(format!(
                "path delay {max} taps exceeds the cyclic prefix of {} samples",
                g.cp_len()
            )));
        }
        Ok(())
    }
}

fn is_integer<T: Real>(v: T) -> bool {
    v.fract() == T::zero()
}

/// Band-limited delay of a fixed signal, reusable across many delays.
#[derive(Debug, Clone)]
pub(crate) struct DelayLine<T> {
    signal: Vec<Complex<T>>,
    spectrum: Vec<Complex<T>>,
}

impl<T: Real> DelayLine<T> {
    /// Padding leaves room for any delay up to `max_delay` samples.
    pub(crate) fn new(signal: &[Complex<T>], max_delay: usize) -> Self {
        let padded = (signal.len() + max_delay + 2).next_power_of_two();
        let mut spectrum = vec![Complex::new(T::zero(), T::zero()); padded];
        spectrum[..signal.len()].copy_from_slice(signal);
        dft_raw_in_place(&mut spectrum, false);
        DelayLine {
            signal: signal.to_vec(),
            spectrum,
        }
    }

    /// `s(q − tau)` for `q` in `0..len`.
    pub(crate) fn delayed(&self, tau: T) -> Vec<Complex<T>> {
        let len = self.signal.len();
        let zero = Complex::new(T::zero(), T::zero());
        if is_integer(tau) && tau >= T::zero() {
            let l = tau.to_usize().unwrap_or(usize::MAX).min(len);
            let mut out = vec![zero; len];
            out[l..].copy_from_slice(&self.signal[..len - l]);
            return out;
        }
        let lp = self.spectrum.len();
        let half = lp / 2;
        let w = -T::TAU() * tau / T::from_usize_lossy(lp);
        let mut buf: Vec<Complex<T>> = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(f, &v)| {
                let fs = if f >= half { f as f64 - lp as f64 } else { f as f64 };
                v * cis(w * T::lit(fs))
            })
            .collect();
        dft_raw_in_place(&mut buf, true);
        let scale = T::from_usize_lossy(lp).recip();
        buf.truncate(len);
        for v in buf.iter_mut() {
            *v = v.scale(scale);
        }
        buf
    }
}

/// `exp(j2π k (q − l)/(MN))` for `q` in `0..len`.
pub(crate) fn doppler_ramp<T: Real>(doppler_taps: T, delay_taps: T, mn: usize, len: usize) -> Vec<Complex<T>> {
    let w = T::TAU() * doppler_taps / T::from_usize_lossy(mn);
    (0..len)
        .map(|q| cis(w * (T::from_usize_lossy(q) - delay_taps)))
        .collect()
}

#[derive(Debug, Clone)]
struct PreparedPath<T> {
    gain: Complex<T>,
    delay: T,
    integer_delay: Option<usize>,
    ramp: Vec<Complex<T>>,
}

/// A channel realization bound to a grid and a signal length, with the
/// per-path Doppler ramps precomputed. Noiseless and linear.
#[derive(Debug, Clone)]
pub struct ChannelOperator<T> {
    len: usize,
    max_delay: usize,
    paths: Vec<PreparedPath<T>>,
}

impl<T: Real> ChannelOperator<T> {
    /// Fails with a contract violation if any delay exceeds the prefix.
    pub fn new(ch: &ChannelRealization<T>, g: &GridSpec<T>, len: usize) -> Result<Self> {
        ch.check_prefix(g)?;
        let paths = ch
            .paths()
            .iter()
            .map(|p| PreparedPath {
                gain: p.gain,
                delay: p.delay_taps,
                integer_delay: if is_integer(p.delay_taps) {
                    p.delay_taps.to_usize()
                } else {
                    None
                },
                ramp: doppler_ramp(p.doppler_taps, p.delay_taps, g.mn(), len),
            })
            .collect();
        Ok(ChannelOperator {
            len,
            max_delay: g.cp_len(),
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when every path delay is a whole number of samples.
    pub fn has_integer_delays(&self) -> bool {
        self.paths.iter().all(|p| p.integer_delay.is_some())
    }

    pub fn apply(&self, s: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(s.len(), self.len, "channel operator bound to another length");
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; self.len];
        let line = if self.has_integer_delays() {
            None
        } else {
            Some(DelayLine::new(s, self.max_delay))
        };
        for p in &self.paths {
            match (p.integer_delay, &line) {
                (Some(l), _) => {
                    for q in l.min(self.len)..self.len {
                        out[q] += p.gain * s[q - l] * p.ramp[q];
                    }
                }
                (None, Some(line)) => {
                    let d = line.delayed(p.delay);
                    for q in 0..self.len {
                        out[q] += p.gain * d[q] * p.ramp[q];
                    }
                }
                (None, None) => unreachable!("fractional path without a delay line"),
            }
        }
        out
    }

    /// Response to a sparse input `(index, value)`; `None` if some path
    /// delay is fractional (the response is then dense).
    pub fn apply_sparse(&self, input: &[(usize, Complex<T>)]) -> Option<Vec<(usize, Complex<T>)>> {
        if !self.has_integer_delays() {
            return None;
        }
        let mut out: Vec<(usize, Complex<T>)> = Vec::with_capacity(input.len() * self.paths.len());
        for &(pos, v) in input {
            for p in &self.paths {
                let q = pos + p.integer_delay.expect("checked above");
                if q < self.len {
                    out.push((q, p.gain * v * p.ramp[q]));
                }
            }
        }
        out.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, Complex<T>)> = Vec::with_capacity(out.len());
        for (q, v) in out {
            match merged.last_mut() {
                Some(last) if last.0 == q => last.1 += v,
                _ => merged.push((q, v)),
            }
        }
        Some(merged)
    }
}

/// Passes `s` through `ch` and adds noise at `ch.snr_db()` relative to the
/// measured energy of the noiseless output. Returns the output and the
/// per-sample noise variance that was used.
pub fn apply_channel_with_variance<T: Real>(
    s: &[Complex<T>],
    ch: &ChannelRealization<T>,
    g: &GridSpec<T>,
    rng: &mut RandomSource,
) -> Result<(Vec<Complex<T>>, f64)> {
    let clean = ChannelOperator::new(ch, g, s.len())?.apply(s);
    let var = noise_variance_for(&clean, ch.snr_db())?;
    Ok((add_noise(&clean, var, rng), var))
}

pub fn apply_channel<T: Real>(
    s: &[Complex<T>],
    ch: &ChannelRealization<T>,
    g: &GridSpec<T>,
    rng: &mut RandomSource,
) -> Result<Vec<Complex<T>>> {
    apply_channel_with_variance(s, ch, g, rng).map(|(r, _)| r)
}

/// Extended Vehicular A: excess delay (ns) and relative power (dB).
pub const EVA_TAPS: [(f64, f64); 9] = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
];

/// EVA realization with per-path Doppler uniform in `±f_c·v/c0`.
pub fn eva_profile<T: Real>(g: &GridSpec<T>, rng: &mut RandomSource, velocity_mps: f64) -> ChannelRealization<T> {
    let nu_max = velocity_to_doppler(T::lit(velocity_mps.abs()), g, Propagation::OneWay).to_f64_lossy();
    eva_profile_with_doppler(g, rng, nu_max)
}

/// EVA realization with an explicit maximum Doppler in Hz.
///
/// Gains are circularly-symmetric Gaussian with the tap powers normalised to
/// unit total mean power. Delays are rounded to the nearest sample.
pub fn eva_profile_with_doppler<T: Real>(
    g: &GridSpec<T>,
    rng: &mut RandomSource,
    nu_max_hz: f64,
) -> ChannelRealization<T> {
    let total: f64 = EVA_TAPS.iter().map(|&(_, db)| 10f64.powf(db / 10.0)).sum();
    let ts = g.sample_period().to_f64_lossy();
    let dnu = g.doppler_resolution().to_f64_lossy();
    let nu_max = nu_max_hz.abs();
    let paths = EVA_TAPS
        .iter()
        .map(|&(delay_ns, db)| {
            let power = 10f64.powf(db / 10.0) / total;
            let gain = rng.complex_gaussian::<T>(power);
            let nu = if nu_max > 0.0 { rng.uniform_in(-nu_max, nu_max) } else { 0.0 };
            let taps = (delay_ns * 1e-9 / ts).round();
            ChannelPath::new(gain, T::lit(taps), T::lit(nu / dnu))
        })
        .collect();
    ChannelRealization::new(paths).expect("EVA taps are valid")
}

/// A point target for sensing scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target<T> {
    pub range_m: T,
    pub velocity_mps: T,
    pub gain: Complex<T>,
}

/// Converts physical targets into echo paths (round-trip delay and Doppler).
pub fn sensing_scene<T: Real>(targets: &[Target<T>], g: &GridSpec<T>) -> Result<ChannelRealization<T>> {
    let paths = targets
        .iter()
        .map(|t| {
            let tau = range_to_delay(t.range_m, g, Propagation::Echo)?;
            let nu = velocity_to_doppler(t.velocity_mps, g, Propagation::Echo);
            Ok(ChannelPath::new(t.gain, g.delay_to_taps(tau), g.doppler_to_taps(nu)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ch = ChannelRealization::new(paths)?;
    ch.check_prefix(g)?;
    Ok(ch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{energy, max_abs_diff};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn grid() -> GridSpec<f64> {
        GridSpec::new(16, 8, 15e3, 0.95e9, 4).unwrap()
    }

    fn signal(len: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = RandomSource::new(seed, 1);
        (0..len).map(|_| rng.complex_gaussian(1.0)).collect()
    }

    fn run(s: &[Complex<f64>], ch: &ChannelRealization<f64>, g: &GridSpec<f64>) -> Vec<Complex<f64>> {
        apply_channel(s, ch, g, &mut RandomSource::new(0, 0)).unwrap()
    }

    #[test]
    fn identity_passes_through() {
        let g = grid();
        let s = signal(132, 1);
        assert_eq!(run(&s, &ChannelRealization::identity(), &g), s);
    }

    #[test]
    fn integer_delay_is_linear_shift() {
        let g = grid();
        let s = signal(132, 2);
        let ch = ChannelRealization::new(vec![ChannelPath::new(c(1.0, 0.0), 2.0, 0.0)]).unwrap();
        let r = run(&s, &ch, &g);
        assert_eq!(r[0], c(0.0, 0.0));
        assert_eq!(r[1], c(0.0, 0.0));
        assert_eq!(&r[2..], &s[..130]);
        // energy preserved once the transient is discarded
        let lost = energy(&s[130..]);
        assert!((energy(&r) - (energy(&s) - lost)).abs() < 1e-9);
    }

    #[test]
    fn paths_superpose() {
        let g = grid();
        let s = signal(132, 3);
        let a = ChannelPath::new(c(0.3, -0.2), 1.0, 0.7);
        let b = ChannelPath::new(c(-0.5, 0.1), 2.5, -1.3);
        let ra = run(&s, &ChannelRealization::new(vec![a]).unwrap(), &g);
        let rb = run(&s, &ChannelRealization::new(vec![b]).unwrap(), &g);
        let rab = run(&s, &ChannelRealization::new(vec![a, b]).unwrap(), &g);
        let sum: Vec<_> = ra.iter().zip(&rb).map(|(x, y)| x + y).collect();
        assert!(max_abs_diff(&sum, &rab) < 1e-12);
    }

    #[test]
    fn fractional_path_degenerates_to_integer() {
        let g = grid();
        let s = signal(132, 4);
        let line = DelayLine::new(&s, g.cp_len());
        // force the spectral path by evaluating just off the integer and at it
        let exact = line.delayed(2.0);
        let spectral: Vec<Complex<f64>> = {
            let lp = line.spectrum.len();
            let half = lp / 2;
            let mut buf: Vec<_> = line
                .spectrum
                .iter()
                .enumerate()
                .map(|(f, &v)| {
                    let fs = if f >= half { f as f64 - lp as f64 } else { f as f64 };
                    v * cis(-std::f64::consts::TAU * 2.0 * fs / lp as f64)
                })
                .collect();
            dft_raw_in_place(&mut buf, true);
            buf.truncate(132);
            buf.iter().map(|v| v / lp as f64).collect()
        };
        assert!(max_abs_diff(&exact, &spectral) < 1e-9);
        let near = line.delayed(2.0 + 1e-12);
        assert!(max_abs_diff(&exact, &near) < 1e-9);
    }

    #[test]
    fn fractional_delay_of_band_limited_tone() {
        // a slow complex tone delayed by 0.5 samples keeps its shape away from the edges
        let g = grid();
        let f = 3.0 / 132.0;
        let s: Vec<Complex<f64>> = (0..132).map(|q| cis(std::f64::consts::TAU * f * q as f64)).collect();
        let d = DelayLine::new(&s, g.cp_len()).delayed(0.5);
        for q in 40..90 {
            let want = cis(std::f64::consts::TAU * f * (q as f64 - 0.5));
            assert!((d[q] - want).norm() < 0.05, "q {q}");
        }
    }

    #[test]
    fn doppler_is_phase_ramp() {
        let g = grid();
        let s = vec![c(1.0, 0.0); 128];
        let ch = ChannelRealization::new(vec![ChannelPath::new(c(1.0, 0.0), 0.0, 2.0)]).unwrap();
        let r = run(&s, &ch, &g);
        for (q, v) in r.iter().enumerate() {
            let want = cis(std::f64::consts::TAU * 2.0 * q as f64 / 128.0);
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn delay_beyond_prefix_rejected() {
        let g = grid();
        let ch = ChannelRealization::new(vec![ChannelPath::new(c(1.0, 0.0), 4.5, 0.0)]).unwrap();
        let err = apply_channel(&signal(132, 5), &ch, &g, &mut RandomSource::new(0, 0));
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn sparse_matches_dense() {
        let g = grid();
        let ch = ChannelRealization::new(vec![
            ChannelPath::new(c(0.3, -0.2), 1.0, 0.7),
            ChannelPath::new(c(-0.5, 0.1), 3.0, -1.3),
            ChannelPath::new(c(0.2, 0.2), 1.0, 2.0),
        ])
        .unwrap();
        let op = ChannelOperator::new(&ch, &g, 132).unwrap();
        for pos in [0usize, 5, 129, 131] {
            let mut e = vec![c(0.0, 0.0); 132];
            e[pos] = c(1.0, 0.5);
            let dense = op.apply(&e);
            let mut from_sparse = vec![c(0.0, 0.0); 132];
            for (q, v) in op.apply_sparse(&[(pos, c(1.0, 0.5))]).unwrap() {
                from_sparse[q] += v;
            }
            assert!(max_abs_diff(&dense, &from_sparse) < 1e-15);
        }
        let frac = ChannelRealization::new(vec![ChannelPath::new(c(1.0, 0.0), 0.5, 0.0)]).unwrap();
        assert!(ChannelOperator::new(&frac, &g, 132).unwrap().apply_sparse(&[(0, c(1.0, 0.0))]).is_none());
    }

    #[test]
    fn resolvability_check() {
        let a = ChannelPath::new(c(1.0, 0.0), 1.0, 0.0);
        let b = ChannelPath::new(c(1.0, 0.0), 1.5, 0.5);
        let d = ChannelPath::new(c(1.0, 0.0), 1.5, 1.0);
        assert!(ChannelRealization::new_resolvable(vec![a, b]).is_err());
        assert!(ChannelRealization::new_resolvable(vec![a, d]).is_ok());
        assert!(ChannelRealization::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn eva_static_has_no_doppler() {
        let g = GridSpec::new(16, 128, 15e3, 0.95e9, 8).unwrap();
        let ch: ChannelRealization<f64> = eva_profile(&g, &mut RandomSource::new(1, 0), 0.0);
        assert_eq!(ch.paths().len(), 9);
        assert!(ch.paths().iter().all(|p| p.doppler_taps == 0.0));
    }

    #[test]
    fn eva_delays_collapse_at_table_two_bandwidth() {
        let g = GridSpec::new(16, 128, 15e3, 0.95e9, 8).unwrap();
        let ch: ChannelRealization<f64> = eva_profile(&g, &mut RandomSource::new(1, 0), 138.9);
        for p in ch.paths() {
            assert!(p.delay_taps == 0.0 || p.delay_taps == 1.0);
        }
        let nu_max = velocity_to_doppler(138.9, &g, Propagation::OneWay) / g.doppler_resolution();
        assert!(ch.paths().iter().all(|p| p.doppler_taps.abs() <= nu_max));
    }

    #[test]
    fn eva_mean_power_is_unit() {
        let g = GridSpec::new(16, 128, 15e3, 0.95e9, 8).unwrap();
        let mut rng = RandomSource::new(99, 0);
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let ch: ChannelRealization<f64> = eva_profile(&g, &mut rng, 10.0);
            total += ch.paths().iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn sensing_scene_taps() {
        let g = GridSpec::new(16, 128, 15e3, 0.95e9, 8).unwrap();
        let origin = sensing_scene(&[Target { range_m: 0.0, velocity_mps: 0.0, gain: c(1.0, 0.0) }], &g).unwrap();
        assert_eq!(origin.paths()[0].delay_taps, 0.0);
        assert_eq!(origin.paths()[0].doppler_taps, 0.0);
        let far = sensing_scene(&[Target { range_m: 3000.0, velocity_mps: 0.0, gain: c(1.0, 0.0) }], &g).unwrap();
        assert!((far.paths()[0].delay_taps - 4.8).abs() < 0.01);
        let too_far = sensing_scene(&[Target { range_m: 6000.0, velocity_mps: 0.0, gain: c(1.0, 0.0) }], &g);
        assert!(matches!(too_far, Err(Error::ContractViolation(_))));
        assert!(sensing_scene(&[Target { range_m: -1.0, velocity_mps: 0.0, gain: c(1.0, 0.0) }], &g).is_err());
    }
}
