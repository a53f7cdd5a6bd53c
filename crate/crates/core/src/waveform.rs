//! Uniform access to the two modems over vectorized symbol frames.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_grid::GridSpec;
use crate::ofdm::{ofdm_demodulate, ofdm_frame_len, ofdm_modulate, TfGrid};
use crate::otfs::{otfs_demodulate, otfs_frame_len, otfs_modulate, DdFrame};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Waveform {
    #[serde(rename = "OFDM")]
    Ofdm,
    #[serde(rename = "OTFS")]
    Otfs,
}

impl Waveform {
    pub const ALL: [Waveform; 2] = [Waveform::Ofdm, Waveform::Otfs];

    pub fn name(self) -> &'static str {
        match self {
            Waveform::Ofdm => "OFDM",
            Waveform::Otfs => "OTFS",
        }
    }

    /// Samples per transmitted frame, prefix included.
    pub fn frame_len<T: Real>(self, g: &GridSpec<T>) -> usize {
        match self {
            Waveform::Ofdm => ofdm_frame_len(g),
            Waveform::Otfs => otfs_frame_len(g),
        }
    }

    /// Length of one prefix-protected block (a symbol for OFDM, the frame for OTFS).
    pub fn block_len<T: Real>(self, g: &GridSpec<T>) -> usize {
        match self {
            Waveform::Ofdm => g.m(),
            Waveform::Otfs => g.mn(),
        }
    }

    /// Modulates `MN` symbols given column-major (`[m, n]` or `[l, k]`).
    pub fn modulate<T: Real>(self, symbols: &[Complex<T>], g: &GridSpec<T>) -> Result<Vec<Complex<T>>> {
        if symbols.len() != g.mn() {
            return Err(Error::invalid(format!("{} symbols for a frame of {}", symbols.len(), g.mn())));
        }
        match self {
            Waveform::Ofdm => ofdm_modulate(&TfGrid::from_vec(g.m(), g.n(), symbols.to_vec())?, g),
            Waveform::Otfs => otfs_modulate(&DdFrame::from_vec(g.m(), g.n(), symbols.to_vec())?, g),
        }
    }

    /// Inverse of [`Waveform::modulate`], returning the vectorized frame.
    pub fn demodulate<T: Real>(self, r: &[Complex<T>], g: &GridSpec<T>) -> Result<Vec<Complex<T>>> {
        match self {
            Waveform::Ofdm => ofdm_demodulate(r, g).map(TfGrid::into_vec),
            Waveform::Otfs => otfs_demodulate(r, g).map(DdFrame::into_vec),
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Waveform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ofdm" => Ok(Waveform::Ofdm),
            "otfs" => Ok(Waveform::Otfs),
            other => Err(Error::invalid(format!("unknown waveform `{other}`"))),
        }
    }
}
