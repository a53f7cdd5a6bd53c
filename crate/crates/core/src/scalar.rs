//! Scalar abstraction shared by every signal-processing module.
//!
//! All transforms, modems, channels and estimators are written against
//! [`Real`], so the same code runs in `f32` (fast sweeps, embedded-style
//! precision studies) and `f64` (reference accuracy). The simulation engine
//! and CLI are pinned to `f64`.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every constant in the crate goes through here.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + FftNum
        + Default
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// `exp(j·theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

/// Sum of `|x|²`.
pub fn energy<T: Real>(x: &[Complex<T>]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr())
}

/// Euclidean norm.
pub fn norm<T: Real>(x: &[Complex<T>]) -> T {
    energy(x).sqrt()
}

/// Largest element-wise `|a - b|`; `+inf` on length mismatch.
pub fn max_abs_diff<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    if a.len() != b.len() {
        return T::infinity();
    }
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).norm()))
}

/// `Σ conj(a)·b`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}
