//! OFDM and OTFS link-level simulation with matched-filter delay-Doppler
//! sensing, MMSE detection and sensing-driven waveform selection.
//!
//! The numerical core is generic over the real scalar type (`f32` or `f64`);
//! the aliases below fix it to `f64`, which is what the simulation engine and
//! the command-line tool use.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod counters;
pub mod equalizer;
pub mod error;
pub mod estimator;
pub mod frame_grid;
pub mod numerics;
pub mod ofdm;
pub mod otfs;
pub mod scalar;
pub mod selector;
pub mod simkit;
pub mod waveform;

pub use channel::{apply_channel, eva_profile, sensing_scene, ChannelPath, ChannelRealization, Target};
pub use config::RunConfig;
pub use counters::{op_counters, reset_op_counters, OpCounts, Stage};
pub use equalizer::{mmse_detect, one_tap_equalize, EffectiveChannel, MmseDetector, TimeDomainDetector};
pub use error::{Error, Result};
pub use estimator::{estimate_targets, mf_metric, EstimatedTarget, EstimatorConfig, SearchGrid};
pub use frame_grid::{GridSpec, Propagation};
pub use numerics::{QamConstellation, RandomSource};
pub use ofdm::{ofdm_demodulate, ofdm_modulate, TfGrid};
pub use otfs::{isfft, otfs_demodulate, otfs_modulate, sfft, DdFrame};
pub use scalar::Real;
pub use selector::{select_waveform, Combine, SelectionPolicy, WaveformChoice};
pub use simkit::{rmse, run_ber_sweep, run_hybrid_sweep, run_rmse_sweep, wilson_interval, ExperimentPlan, MetricsRecord};
pub use waveform::Waveform;

pub type C64 = num_complex::Complex<f64>;
pub type Grid = GridSpec<f64>;
pub type Channel = ChannelRealization<f64>;
pub type Path = ChannelPath<f64>;
pub type TfGrid64 = TfGrid<f64>;
pub type DdFrame64 = DdFrame<f64>;
pub type Estimate = EstimatedTarget<f64>;
pub type Scene = Target<f64>;
pub type Constellation = QamConstellation<f64>;
pub type Choice = WaveformChoice<f64>;
