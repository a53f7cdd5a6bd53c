//! Frame geometry and physical-unit conversions.
//!
//! The time-frequency lattice samples time every `T = 1/Δf` seconds and
//! frequency every `Δf` Hz; the delay-Doppler lattice has steps
//! `1/(M·Δf)` s and `1/(N·T)` Hz. Baseband runs at critical sampling,
//! `T_s = 1/(M·Δf)`, so one delay bin is one sample.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exact SI speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Round-trip radar echo (factor 2) or one-way propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    Echo,
    OneWay,
}

impl Propagation {
    fn factor<T: Real>(self) -> T {
        match self {
            Propagation::Echo => T::lit(2.0),
            Propagation::OneWay => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    Rectangular,
}

/// Transmit/receive pulse: 1 on `[0, duration)`, 0 elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape<T> {
    pub kind: PulseKind,
    pub duration: T,
}

impl<T: Real> PulseShape<T> {
    pub fn eval(&self, t: T) -> T {
        match self.kind {
            PulseKind::Rectangular => {
                if t >= T::zero() && t < self.duration {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    m: usize,
    n: usize,
    delta_f: T,
    f_c: T,
    cp_len: usize,
    c0: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(m: usize, n: usize, delta_f: T, f_c: T, cp_len: usize) -> Result<Self> {
        Self::with_speed(m, n, delta_f, f_c, cp_len, T::lit(SPEED_OF_LIGHT))
    }

    /// Same as [`GridSpec::new`] with a custom propagation speed.
    pub fn with_speed(m: usize, n: usize, delta_f: T, f_c: T, cp_len: usize, c0: T) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("M = {m} subcarriers; need at least 2")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("N = {n} time slots; need at least 2")));
        }
        if !(delta_f > T::zero()) || !delta_f.is_finite() {
            return Err(Error::invalid(format!("subcarrier spacing {delta_f} Hz must be positive")));
        }
        if !(f_c > T::zero()) || !f_c.is_finite() {
            return Err(Error::invalid(format!("carrier frequency {f_c} Hz must be positive")));
        }
        if !(c0 > T::zero()) || !c0.is_finite() {
            return Err(Error::invalid(format!("propagation speed {c0} must be positive")));
        }
        if cp_len >= m * n {
            return Err(Error::invalid(format!("cyclic prefix {cp_len} longer than the frame")));
        }
        Ok(GridSpec {
            m,
            n,
            delta_f,
            f_c,
            cp_len,
            c0,
        })
    }

    /// Subcarriers per symbol (delay bins).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Time slots per frame (Doppler bins).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn delta_f(&self) -> T {
        self.delta_f
    }

    pub fn carrier(&self) -> T {
        self.f_c
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    /// Symbol duration `T = 1/Δf`.
    pub fn symbol_duration(&self) -> T {
        self.delta_f.recip()
    }

    /// Sampling interval `T_s = 1/(M·Δf)`.
    pub fn sample_period(&self) -> T {
        (T::from_usize_lossy(self.m) * self.delta_f).recip()
    }

    /// Occupied bandwidth `B = M·Δf`.
    pub fn bandwidth(&self) -> T {
        T::from_usize_lossy(self.m) * self.delta_f
    }

    /// Frame duration `T_f = N·T`.
    pub fn frame_duration(&self) -> T {
        T::from_usize_lossy(self.n) * self.symbol_duration()
    }

    /// One delay bin, seconds.
    pub fn delay_resolution(&self) -> T {
        self.sample_period()
    }

    /// One Doppler bin, Hz.
    pub fn doppler_resolution(&self) -> T {
        self.frame_duration().recip()
    }

    pub fn pulse(&self) -> PulseShape<T> {
        PulseShape {
            kind: PulseKind::Rectangular,
            duration: self.symbol_duration(),
        }
    }

    /// `(n·T, m·Δf)` for every point of the time-frequency lattice, `n` outer.
    pub fn tf_lattice(&self) -> Vec<(T, T)> {
        let t = self.symbol_duration();
        (0..self.n)
            .flat_map(|n| (0..self.m).map(move |m| (T::from_usize_lossy(n) * t, T::from_usize_lossy(m) * self.delta_f)))
            .collect()
    }

    /// `(k/(N·T), l/(M·Δf))` for every point of the delay-Doppler lattice, `k` outer.
    pub fn dd_lattice(&self) -> Vec<(T, T)> {
        let dnu = self.doppler_resolution();
        let dtau = self.delay_resolution();
        (0..self.n)
            .flat_map(|k| (0..self.m).map(move |l| (T::from_usize_lossy(k) * dnu, T::from_usize_lossy(l) * dtau)))
            .collect()
    }

    pub fn delay_to_taps(&self, tau: T) -> T {
        tau / self.delay_resolution()
    }

    pub fn taps_to_delay(&self, taps: T) -> T {
        taps * self.delay_resolution()
    }

    pub fn doppler_to_taps(&self, nu: T) -> T {
        nu / self.doppler_resolution()
    }

    pub fn taps_to_doppler(&self, taps: T) -> T {
        taps * self.doppler_resolution()
    }
}

/// `v = ν·c0/(2·f_c)` for echoes, `ν·c0/f_c` one-way.
pub fn doppler_to_velocity<T: Real>(nu: T, g: &GridSpec<T>, mode: Propagation) -> T {
    nu * g.c0() / (mode.factor::<T>() * g.carrier())
}

/// Inverse of [`doppler_to_velocity`].
pub fn velocity_to_doppler<T: Real>(v: T, g: &GridSpec<T>, mode: Propagation) -> T {
    mode.factor::<T>() * g.carrier() * v / g.c0()
}

/// `r = τ·c0/2` for echoes, `τ·c0` one-way.
pub fn delay_to_range<T: Real>(tau: T, g: &GridSpec<T>, mode: Propagation) -> Result<T> {
    if tau < T::zero() || tau.is_nan() {
        return Err(Error::invalid(format!("negative delay {tau} s")));
    }
    Ok(tau * g.c0() / mode.factor::<T>())
}

/// Inverse of [`delay_to_range`].
pub fn range_to_delay<T: Real>(r: T, g: &GridSpec<T>, mode: Propagation) -> Result<T> {
    if r < T::zero() || r.is_nan() {
        return Err(Error::invalid(format!("negative range {r} m")));
    }
    Ok(mode.factor::<T>() * r / g.c0())
}

/// km/h to m/s.
pub fn kmh_to_mps(v: f64) -> f64 {
    v / 3.6
}

pub fn mps_to_kmh(v: f64) -> f64 {
    v * 3.6
}
