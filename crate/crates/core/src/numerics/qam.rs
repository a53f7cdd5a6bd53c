//! Gray-labelled square QAM with unit average energy.
//!
//! A label of `b = log2(Q)` bits is split in two halves: the leading half
//! selects the in-phase level, the trailing half the quadrature level, each
//! through a binary-reflected Gray code. Point index equals the label read
//! as an MSB-first integer.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation<T> {
    order: usize,
    bits_per_symbol: usize,
    levels_per_axis: usize,
    scale: T,
    points: Vec<Complex<T>>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl<T: Real> QamConstellation<T> {
    /// Supported orders: 4, 16, 64, 256, ... (even powers of two).
    pub fn new(order: usize) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || !order.trailing_zeros().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "QAM order {order} is not an even power of two >= 4"
            )));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let levels_per_axis = 1usize << (bits_per_symbol / 2);
        // mean |point|² = 2(L²-1)/3 before scaling
        let l = levels_per_axis as f64;
        let scale = T::lit((2.0 * (l * l - 1.0) / 3.0).sqrt().recip());
        let mut c = QamConstellation {
            order,
            bits_per_symbol,
            levels_per_axis,
            scale,
            points: Vec::with_capacity(order),
        };
        c.points = (0..order).map(|label| c.point_for_label(label)).collect();
        Ok(c)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    /// Label of point `index` as bits, MSB first.
    pub fn bit_label(&self, index: usize) -> Vec<bool> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| (index >> b) & 1 == 1)
            .collect()
    }

    fn level(&self, index: usize) -> T {
        T::lit(2.0 * index as f64 - (self.levels_per_axis as f64 - 1.0)) * self.scale
    }

    fn point_for_label(&self, label: usize) -> Complex<T> {
        let half = self.bits_per_symbol / 2;
        let mask = (1usize << half) - 1;
        let i_idx = gray_inverse(label >> half);
        let q_idx = gray_inverse(label & mask);
        Complex::new(self.level(i_idx), self.level(q_idx))
    }

    /// Level index on one axis nearest to `x`; exact midpoints go to the level
    /// with the smaller Gray label.
    fn slice_axis(&self, x: T) -> usize {
        let top = self.levels_per_axis - 1;
        let t = (x / self.scale + T::from_usize_lossy(top)) / T::lit(2.0);
        if t.is_nan() || t <= T::zero() {
            return 0;
        }
        if t >= T::from_usize_lossy(top) {
            return top;
        }
        let lo = t.floor();
        let frac = t - lo;
        let lo = lo.to_usize().unwrap_or(0).min(top);
        let half = T::lit(0.5);
        if frac < half {
            lo
        } else if frac > half || lo == top {
            (lo + 1).min(top)
        } else if gray(lo) <= gray(lo + 1) {
            lo
        } else {
            lo + 1
        }
    }

    /// Label of the nearest point; ties go to the smallest label.
    pub fn nearest_label(&self, y: Complex<T>) -> usize {
        let half = self.bits_per_symbol / 2;
        (gray(self.slice_axis(y.re)) << half) | gray(self.slice_axis(y.im))
    }

    pub fn map(&self, bits: &[bool]) -> Result<Vec<Complex<T>>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::invalid(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|group| {
                let label = group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                self.points[label]
            })
            .collect())
    }

    pub fn demap(&self, y: &[Complex<T>]) -> Vec<bool> {
        let mut out = Vec::with_capacity(y.len() * self.bits_per_symbol);
        for &v in y {
            let label = self.nearest_label(v);
            out.extend((0..self.bits_per_symbol).rev().map(|b| (label >> b) & 1 == 1));
        }
        out
    }

    /// Smallest distance between two distinct points.
    pub fn min_distance(&self) -> T {
        self.scale * T::lit(2.0)
    }
}

/// Maps `bits` onto `c`.
pub fn qam_map<T: Real>(bits: &[bool], c: &QamConstellation<T>) -> Result<Vec<Complex<T>>> {
    c.map(bits)
}

/// Hard-decision demapping by minimum Euclidean distance.
pub fn qam_demap<T: Real>(y: &[Complex<T>], c: &QamConstellation<T>) -> Vec<bool> {
    c.demap(y)
}
