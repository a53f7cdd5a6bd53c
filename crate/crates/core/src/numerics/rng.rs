use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams with different ids never overlap, so Monte Carlo trials can each
/// own one and run in any order or in parallel.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomSource {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bit(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn bits(&mut self, n: usize) -> Vec<bool> {
        (0..n).map(|_| self.bit()).collect()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Circularly-symmetric complex Gaussian with `E|z|² = variance`.
    pub fn complex_gaussian<T: Real>(&mut self, variance: f64) -> Complex<T> {
        let s = (variance / 2.0).sqrt();
        let re = self.standard_normal() * s;
        let im = self.standard_normal() * s;
        Complex::new(T::lit(re), T::lit(im))
    }

    /// Unit-magnitude phasor with uniform phase.
    pub fn unit_phasor<T: Real>(&mut self) -> Complex<T> {
        let th = self.uniform_in(0.0, std::f64::consts::TAU);
        Complex::from_polar(T::one(), T::lit(th))
    }
}

/// Converts an SNR in dB to linear; `+inf` maps to `inf`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Per-sample noise variance giving `snr_db` against the measured mean
/// per-sample energy of `x`. Zero for the `+inf` (noiseless) sentinel.
pub fn noise_variance_for<T: Real>(x: &[Complex<T>], snr_db: f64) -> Result<f64> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR is NaN"));
    }
    if x.is_empty() {
        return Err(Error::invalid("awgn on empty signal"));
    }
    let mean_energy = x.iter().map(|v| v.norm_sqr().to_f64_lossy()).sum::<f64>() / x.len() as f64;
    if mean_energy <= 0.0 {
        return Err(Error::invalid("awgn with finite SNR on a zero-energy signal"));
    }
    Ok(mean_energy / db_to_linear(snr_db))
}

/// Adds circularly-symmetric white noise with an explicit per-sample variance.
pub fn add_noise<T: Real>(x: &[Complex<T>], variance: f64, rng: &mut RandomSource) -> Vec<Complex<T>> {
    if variance == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|&v| v + rng.complex_gaussian::<T>(variance)).collect()
}

/// `x + w` with `w` scaled to the requested SNR relative to the energy of `x`.
pub fn awgn<T: Real>(x: &[Complex<T>], snr_db: f64, rng: &mut RandomSource) -> Result<Vec<Complex<T>>> {
    let var = noise_variance_for(x, snr_db)?;
    Ok(add_noise(x, var, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_samples() {
        let mut a = RandomSource::new(7, 3);
        let mut b = RandomSource::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RandomSource::new(7, 3);
        let mut b = RandomSource::new(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.uniform().to_bits()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.uniform().to_bits()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn infinite_snr_is_identity() {
        let x = vec![Complex::new(1.0f64, -2.0); 16];
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(awgn(&x, f64::INFINITY, &mut rng).unwrap(), x);
    }

    #[test]
    fn zero_energy_rejected() {
        let x = vec![Complex::new(0.0f64, 0.0); 4];
        let mut rng = RandomSource::new(1, 0);
        assert!(awgn(&x, 10.0, &mut rng).is_err());
        assert_eq!(awgn(&x, f64::INFINITY, &mut rng).unwrap(), x);
    }

    #[test]
    fn zero_db_variance_matches() {
        let n = 100_000;
        let x = vec![Complex::new(1.0f64, 0.0); n];
        let mut rng = RandomSource::new(2024, 11);
        let y = awgn(&x, 0.0, &mut rng).unwrap();
        let var: f64 = y.iter().map(|v| (v - Complex::new(1.0, 0.0)).norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn deterministic_noise() {
        let x: Vec<Complex<f64>> = (0..64).map(|i| Complex::new(i as f64, 1.0)).collect();
        let a = awgn(&x, 3.0, &mut RandomSource::new(5, 9)).unwrap();
        let b = awgn(&x, 3.0, &mut RandomSource::new(5, 9)).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
    }
}
