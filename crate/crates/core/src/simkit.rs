//! Monte Carlo engine: RMSE sweeps for the sensing receiver, BER sweeps for
//! both waveforms, and the hybrid sense-then-select experiment.
//!
//! Every trial is an independent job whose random streams are derived from
//! `(base_seed, namespace, point indices, trial)`, so results do not depend
//! on the worker count or schedule. Jobs run on rayon and are collected in
//! submission order; all reductions happen afterwards, sequentially.
//!
//! Draws that do not depend on the SNR (scene, data, channel, and the unit
//! noise sequence) are shared across the SNR axis, and BER channels are
//! shared across waveforms, so curves are compared on common random numbers.

use num_complex::Complex;
use rayon::prelude::*;

use crate::channel::{apply_channel_with_variance, eva_profile_with_doppler, sensing_scene, ChannelOperator, Target};
use crate::counters::{op_counters, OpCounts};
use crate::equalizer::TimeDomainDetector;
use crate::error::{Error, Result};
use crate::estimator::{estimate_targets, EstimatedTarget, EstimatorConfig, SearchGrid};
use crate::frame_grid::{mps_to_kmh, velocity_to_doppler, GridSpec, Propagation};
use crate::numerics::{add_noise, noise_variance_for, QamConstellation, RandomSource};
use crate::selector::{select_waveform, SelectionPolicy};
use crate::waveform::Waveform;

/// Root of the mean over trials of each trial's mean squared error.
///
/// `truth[i]` and `estimates[i]` hold the `P` values of trial `i`.
pub fn rmse(truth: &[Vec<f64>], estimates: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "{} truth trials but {} estimate trials",
            truth.len(),
            estimates.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("rmse over zero trials"));
    }
    let mut total = 0.0;
    for (i, (t, e)) in truth.iter().zip(estimates).enumerate() {
        if t.len() != e.len() || t.is_empty() {
            return Err(Error::invalid(format!("trial {i}: {} truths vs {} estimates", t.len(), e.len())));
        }
        total += t.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64;
    }
    Ok((total / truth.len() as f64).sqrt())
}

/// Two-sided 95% Wilson score interval for `errors` out of `n`.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Everything a sweep needs; one plan drives all three experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub grid: GridSpec<f64>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub modulation_order: usize,
    /// BER points run at least this many payload bits.
    pub min_bits_per_point: u64,
    /// Sensing scenes are every (range, velocity) pair.
    pub ranges_m: Vec<f64>,
    /// Scene velocities for sensing and terminal speeds for BER.
    pub velocities_mps: Vec<f64>,
    /// When non-empty, BER points use these maximum Doppler shifts (Hz)
    /// instead of converting `velocities_mps`.
    pub doppler_override_hz: Vec<f64>,
    /// Frame used for sensing in the RMSE sweep.
    pub sensing_waveform: Waveform,
    pub ber_waveforms: Vec<Waveform>,
    pub estimator: EstimatorConfig,
    pub policy: SelectionPolicy,
    /// Range of the sensed terminal in the hybrid experiment.
    pub hybrid_range_m: f64,
}

impl ExperimentPlan {
    /// The 16 × 128, 15 kHz, 0.95 GHz frame with 200 trials per point.
    pub fn table_two() -> Self {
        ExperimentPlan {
            grid: GridSpec::new(16, 128, 15e3, 0.95e9, 8).expect("valid constants"),
            snr_db: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
            trials: 200,
            base_seed: 1,
            modulation_order: 64,
            min_bits_per_point: 100_000,
            ranges_m: vec![10.0, 30.0, 90.0],
            velocities_mps: [3.0, 10.0, 200.0, 500.0].iter().map(|v| v / 3.6).collect(),
            doppler_override_hz: Vec::new(),
            sensing_waveform: Waveform::Otfs,
            ber_waveforms: vec![Waveform::Ofdm, Waveform::Otfs],
            estimator: EstimatorConfig::default(),
            policy: SelectionPolicy::default(),
            hybrid_range_m: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid("at least one SNR point is required"));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("SNR points must be numbers"));
        }
        if self.ranges_m.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("ranges must be non-negative"));
        }
        if self.velocities_mps.iter().chain(&self.doppler_override_hz).any(|v| !v.is_finite()) {
            return Err(Error::invalid("velocities and Doppler overrides must be finite"));
        }
        QamConstellation::<f64>::new(self.modulation_order)?;
        self.estimator.validate()?;
        self.policy.validate()?;
        Ok(())
    }

    fn bits_per_frame(&self) -> usize {
        self.grid.mn() * self.modulation_order.trailing_zeros() as usize
    }

    /// Frames per BER point.
    pub fn frames_per_point(&self) -> usize {
        let bpf = self.bits_per_frame() as u64;
        (self.trials as u64).max(self.min_bits_per_point.div_ceil(bpf)) as usize
    }

    /// Maximum Doppler (Hz) of each BER point.
    pub fn ber_dopplers_hz(&self) -> Vec<f64> {
        if !self.doppler_override_hz.is_empty() {
            return self.doppler_override_hz.iter().map(|d| d.abs()).collect();
        }
        self.velocities_mps
            .iter()
            .map(|&v| velocity_to_doppler(v.abs(), &self.grid, Propagation::OneWay))
            .collect()
    }
}

/// Random-stream namespaces.
const NS_SCENE: u64 = 1;
const NS_SCENE_NOISE: u64 = 2;
const NS_LINK: u64 = 3;
const NS_LINK_NOISE: u64 = 4;
const NS_PROBE: u64 = 5;
const NS_PROBE_NOISE: u64 = 6;

fn stream(ns: u64, a: usize, b: usize, trial: usize) -> u64 {
    (ns << 56) | ((a as u64 & 0xffff) << 40) | ((b as u64 & 0xffff) << 24) | (trial as u64 & 0xff_ffff)
}

fn counted<R>(f: impl FnOnce() -> Result<R>) -> Result<(R, OpCounts)> {
    let before = op_counters();
    let out = f()?;
    Ok((out, op_counters() - before))
}

fn random_frame(
    plan: &ExperimentPlan,
    waveform: Waveform,
    rng: &mut RandomSource,
) -> Result<(Vec<bool>, Vec<Complex<f64>>)> {
    let qam = QamConstellation::<f64>::new(plan.modulation_order)?;
    let bits = rng.bits(plan.bits_per_frame());
    let s = waveform.modulate(&qam.map(&bits)?, &plan.grid)?;
    Ok((bits, s))
}

/// One row of a sweep. Fields that do not apply to an experiment are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario: usize,
    pub waveform: Waveform,
    pub snr_db: f64,
    pub velocity_mps: f64,
    pub max_doppler_hz: Option<f64>,
    pub range_m: Option<f64>,
    pub trials: u64,
    pub detections: Option<u64>,
    pub rmse_range_m: Option<f64>,
    pub rmse_velocity_mps: Option<f64>,
    pub ber: Option<f64>,
    pub bit_count: Option<u64>,
    pub error_count: Option<u64>,
    pub op_counts: OpCounts,
    pub seed: u64,
}

impl MetricsRecord {
    /// 95% Wilson interval of the BER, if this is a BER row.
    pub fn ber_interval(&self) -> Option<(f64, f64)> {
        Some(wilson_interval(self.error_count?, self.bit_count?))
    }

    /// Copy with the operation counts cleared, for comparisons that ignore
    /// instrumentation.
    pub fn without_counts(&self) -> Self {
        MetricsRecord {
            op_counts: OpCounts::default(),
            ..self.clone()
        }
    }
}

struct SensingOutcome {
    estimate: Option<(f64, f64)>,
    counts: OpCounts,
}

/// Senses one unit-gain, random-phase target at `(range_m, velocity_mps)`
/// with a fresh random frame; `streams` key the scene and noise draws.
fn sense(
    plan: &ExperimentPlan,
    waveform: Waveform,
    (range_m, velocity_mps): (f64, f64),
    snr_db: f64,
    streams: (u64, u64),
    cfg: &EstimatorConfig,
) -> Result<Vec<EstimatedTarget<f64>>> {
    let g = &plan.grid;
    let mut scene_rng = RandomSource::new(plan.base_seed, streams.0);
    let mut noise_rng = RandomSource::new(plan.base_seed, streams.1);
    let gain = scene_rng.unit_phasor::<f64>();
    let (_, s) = random_frame(plan, waveform, &mut scene_rng)?;
    let scene = sensing_scene(
        &[Target {
            range_m,
            velocity_mps,
            gain,
        }],
        g,
    )?;
    let echo = ChannelOperator::new(&scene, g, s.len())?.apply(&s);
    let r = add_noise(&echo, noise_variance_for(&s, snr_db)?, &mut noise_rng);
    estimate_targets(&r, &s, &SearchGrid::for_grid(g), g, cfg)
}

/// RMSE of range and velocity per (scene, SNR); scenes are every
/// (range, velocity) pair, each a single unit-gain target with random phase.
pub fn run_rmse_sweep(plan: &ExperimentPlan) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    let scenes: Vec<(f64, f64)> = plan
        .ranges_m
        .iter()
        .flat_map(|&r| plan.velocities_mps.iter().map(move |&v| (r, v)))
        .collect();
    let jobs: Vec<(usize, usize, usize)> = (0..scenes.len())
        .flat_map(|sc| (0..plan.snr_db.len()).flat_map(move |si| (0..plan.trials).map(move |t| (sc, si, t))))
        .collect();
    let outcomes: Vec<Result<SensingOutcome>> = jobs
        .par_iter()
        .map(|&(sc, si, t)| {
            let cfg = EstimatorConfig {
                max_targets: 1,
                ..plan.estimator
            };
            let streams = (stream(NS_SCENE, sc, 0, t), stream(NS_SCENE_NOISE, sc, 0, t));
            let (estimate, counts) = counted(|| {
                let found = sense(plan, plan.sensing_waveform, scenes[sc], plan.snr_db[si], streams, &cfg)?;
                Ok(found.first().map(|t| (t.range_m, t.velocity_mps)))
            })?;
            Ok(SensingOutcome { estimate, counts })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (sc, &(range, velocity)) in scenes.iter().enumerate() {
        for (si, &snr) in plan.snr_db.iter().enumerate() {
            let base = (sc * plan.snr_db.len() + si) * plan.trials;
            let point = &outcomes[base..base + plan.trials];
            let mut counts = OpCounts::default();
            let (mut tr, mut er, mut tv, mut ev) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for o in point {
                counts += o.counts;
                if let Some((r_hat, v_hat)) = o.estimate {
                    tr.push(vec![range]);
                    er.push(vec![r_hat]);
                    tv.push(vec![velocity]);
                    ev.push(vec![v_hat]);
                }
            }
            let detections = tr.len() as u64;
            records.push(MetricsRecord {
                scenario: sc,
                waveform: plan.sensing_waveform,
                snr_db: snr,
                velocity_mps: velocity,
                max_doppler_hz: None,
                range_m: Some(range),
                trials: plan.trials as u64,
                detections: Some(detections),
                rmse_range_m: if detections > 0 { Some(rmse(&tr, &er)?) } else { None },
                rmse_velocity_mps: if detections > 0 { Some(rmse(&tv, &ev)?) } else { None },
                ber: None,
                bit_count: None,
                error_count: None,
                op_counts: counts,
                seed: plan.base_seed,
            });
        }
    }
    Ok(records)
}

struct FrameOutcome {
    errors: u64,
    bits: u64,
    counts: OpCounts,
}

/// One EVA frame through modulate → channel → time-domain LMMSE → slicer.
fn ber_frame(plan: &ExperimentPlan, waveform: Waveform, vi: usize, nu_max: f64, snr_db: f64, frame: usize) -> Result<FrameOutcome> {
    let g = &plan.grid;
    let qam = QamConstellation::<f64>::new(plan.modulation_order)?;
    let ((errors, bits), counts) = counted(|| {
        let mut link = RandomSource::new(plan.base_seed, stream(NS_LINK, vi, 0, frame));
        let ch = eva_profile_with_doppler(g, &mut link, nu_max).with_snr_db(snr_db);
        let (bits, s) = random_frame(plan, waveform, &mut link)?;
        let mut noise = RandomSource::new(plan.base_seed, stream(NS_LINK_NOISE, vi, 0, frame));
        let (r, var) = apply_channel_with_variance(&s, &ch, g, &mut noise)?;
        let detected = TimeDomainDetector::new(waveform, &ch, g, var)?.detect(&r, &qam)?;
        let errors = detected.bits.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
        Ok((errors, bits.len() as u64))
    })?;
    Ok(FrameOutcome { errors, bits, counts })
}

fn ber_record(plan: &ExperimentPlan, waveform: Waveform, vi: usize, si: usize, frames: &[FrameOutcome]) -> MetricsRecord {
    let mut counts = OpCounts::default();
    let (mut errors, mut bits) = (0u64, 0u64);
    for f in frames {
        counts += f.counts;
        errors += f.errors;
        bits += f.bits;
    }
    MetricsRecord {
        scenario: vi,
        waveform,
        snr_db: plan.snr_db[si],
        velocity_mps: plan.velocities_mps.get(vi).copied().unwrap_or(f64::NAN),
        max_doppler_hz: Some(plan.ber_dopplers_hz()[vi]),
        range_m: None,
        trials: frames.len() as u64,
        detections: None,
        rmse_range_m: None,
        rmse_velocity_mps: None,
        ber: Some(errors as f64 / bits as f64),
        bit_count: Some(bits),
        error_count: Some(errors),
        op_counts: counts,
        seed: plan.base_seed,
    }
}

/// Runs the BER points `(waveform, velocity index, snr index)` in order.
fn run_ber_points(plan: &ExperimentPlan, points: &[(Waveform, usize, usize)]) -> Result<Vec<MetricsRecord>> {
    let dopplers = plan.ber_dopplers_hz();
    let frames = plan.frames_per_point();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..frames).map(move |f| (p, f))).collect();
    let outcomes: Vec<Result<FrameOutcome>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (w, vi, si) = points[p];
            ber_frame(plan, w, vi, dopplers[vi], plan.snr_db[si], f)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(w, vi, si))| ber_record(plan, w, vi, si, &outcomes[p * frames..(p + 1) * frames]))
        .collect())
}

fn ber_point_count(plan: &ExperimentPlan) -> usize {
    if plan.doppler_override_hz.is_empty() {
        plan.velocities_mps.len()
    } else {
        plan.doppler_override_hz.len()
    }
}

/// BER per (waveform, velocity, SNR) with a fresh EVA channel every frame.
pub fn run_ber_sweep(plan: &ExperimentPlan) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    if plan.ber_waveforms.is_empty() {
        return Err(Error::invalid("no waveform selected for the BER sweep"));
    }
    let points: Vec<(Waveform, usize, usize)> = plan
        .ber_waveforms
        .iter()
        .flat_map(|&w| (0..ber_point_count(plan)).flat_map(move |vi| (0..plan.snr_db.len()).map(move |si| (w, vi, si))))
        .collect();
    run_ber_points(plan, &points)
}

/// Senses the terminal with one OTFS frame per (velocity, SNR), lets the
/// selector choose the waveform, then runs that waveform's BER point with
/// exactly the seeds the pure sweep would use.
pub fn run_hybrid_sweep(plan: &ExperimentPlan) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    if !plan.doppler_override_hz.is_empty() {
        return Err(Error::invalid("the hybrid experiment senses velocities; Doppler overrides do not apply"));
    }
    let nv = plan.velocities_mps.len();
    let ns = plan.snr_db.len();
    let probes: Vec<(usize, usize)> = (0..nv).flat_map(|vi| (0..ns).map(move |si| (vi, si))).collect();
    let sensed: Vec<Result<(Waveform, OpCounts)>> = probes
        .par_iter()
        .map(|&(vi, si)| {
            let streams = (stream(NS_PROBE, vi, si, 0), stream(NS_PROBE_NOISE, vi, si, 0));
            let target = (plan.hybrid_range_m, plan.velocities_mps[vi]);
            let (choice, counts) = counted(|| {
                let found = sense(plan, Waveform::Otfs, target, plan.snr_db[si], streams, &plan.estimator)?;
                Ok(select_waveform(&found, &plan.policy).waveform)
            })?;
            Ok((choice, counts))
        })
        .collect();
    let sensed = sensed.into_iter().collect::<Result<Vec<_>>>()?;
    let points: Vec<(Waveform, usize, usize)> = probes.iter().zip(&sensed).map(|(&(vi, si), &(w, _))| (w, vi, si)).collect();
    let mut records = run_ber_points(plan, &points)?;
    for (rec, (_, counts)) in records.iter_mut().zip(&sensed) {
        rec.op_counts += *counts;
    }
    Ok(records)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const COUNTER_COLUMNS: &str = "ops_ofdm_mod,ops_otfs_mod,ops_mf_metric,ops_refinement,ops_mmse";

fn counter_cells(c: &OpCounts) -> String {
    format!("{},{},{},{},{}", c.ofdm_mod, c.otfs_mod, c.mf_metric, c.refinement, c.mmse)
}

/// RMSE rows: `scenario,waveform,snr_db,range_m,velocity_kmh,velocity_mps,
/// trials,detections,rmse_range_m,rmse_velocity_mps,seed`, plus counters.
pub fn rmse_csv(records: &[MetricsRecord], with_counts: bool) -> String {
    let mut out = String::from(
        "scenario,waveform,snr_db,range_m,velocity_kmh,velocity_mps,trials,detections,rmse_range_m,rmse_velocity_mps,seed",
    );
    if with_counts {
        out.push(',');
        out.push_str(COUNTER_COLUMNS);
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.waveform,
            r.snr_db,
            opt(r.range_m),
            mps_to_kmh(r.velocity_mps),
            r.velocity_mps,
            r.trials,
            opt(r.detections),
            opt(r.rmse_range_m),
            opt(r.rmse_velocity_mps),
            r.seed
        ));
        if with_counts {
            out.push(',');
            out.push_str(&counter_cells(&r.op_counts));
        }
        out.push('\n');
    }
    out
}

/// BER rows: `point,waveform,snr_db,velocity_kmh,max_doppler_hz,frames,
/// bit_count,error_count,ber,ber_low,ber_high,seed`, plus counters.
pub fn ber_csv(records: &[MetricsRecord], with_counts: bool) -> String {
    let mut out = String::from(
        "point,waveform,snr_db,velocity_kmh,max_doppler_hz,frames,bit_count,error_count,ber,ber_low,ber_high,seed",
    );
    if with_counts {
        out.push(',');
        out.push_str(COUNTER_COLUMNS);
    }
    out.push('\n');
    for r in records {
        let (lo, hi) = r.ber_interval().unzip();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.waveform,
            r.snr_db,
            mps_to_kmh(r.velocity_mps),
            opt(r.max_doppler_hz),
            r.trials,
            opt(r.bit_count),
            opt(r.error_count),
            opt(r.ber),
            opt(lo),
            opt(hi),
            r.seed
        ));
        if with_counts {
            out.push(',');
            out.push_str(&counter_cells(&r.op_counts));
        }
        out.push('\n');
    }
    out
}
