//! Flat `key = value` run configuration.
//!
//! Grammar: one `key = value` per line, `#` starts a comment, lists are
//! comma-separated scalars (an empty value is an empty list). Keys are dotted
//! paths and carry their unit in the name. Unknown or repeated keys are
//! rejected with the key and line number. Serialising writes every key in a
//! fixed order with shortest round-trip number formatting, so
//! `parse(serialize(c)) == c`.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex;

use crate::channel::Target;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::frame_grid::{kmh_to_mps, GridSpec};
use crate::selector::{Combine, SelectionPolicy};
use crate::simkit::ExperimentPlan;
use crate::waveform::Waveform;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    pub carrier_hz: f64,
    pub cp_len: usize,
    pub c0_mps: f64,

    pub ranges_m: Vec<f64>,
    pub velocities_kmh: Vec<f64>,
    pub doppler_override_hz: Vec<f64>,
    pub target_ranges_m: Vec<f64>,
    pub target_velocities_kmh: Vec<f64>,
    pub target_gains: Vec<f64>,
    pub target_phases_deg: Vec<f64>,
    pub scene_snr_db: f64,
    pub scene_waveform: Waveform,

    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub modulation_order: usize,
    pub min_bits_per_point: u64,
    pub sensing_waveform: Waveform,
    pub ber_waveforms: Vec<Waveform>,
    pub hybrid_range_m: f64,

    pub estimator: EstimatorConfig,

    pub velocity_threshold_kmh: f64,
    pub range_threshold_m: f64,
    pub combine: Combine,

    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = ExperimentPlan::table_two();
        let g = plan.grid;
        RunConfig {
            m: g.m(),
            n: g.n(),
            delta_f_hz: g.delta_f(),
            carrier_hz: g.carrier(),
            cp_len: g.cp_len(),
            c0_mps: g.c0(),
            ranges_m: plan.ranges_m,
            velocities_kmh: vec![3.0, 10.0, 200.0, 500.0],
            doppler_override_hz: Vec::new(),
            target_ranges_m: vec![1250.0, 3125.0],
            target_velocities_kmh: vec![200.0, -80.0],
            target_gains: vec![1.0, 0.5],
            target_phases_deg: vec![0.0, 90.0],
            scene_snr_db: 20.0,
            scene_waveform: Waveform::Otfs,
            snr_db: plan.snr_db,
            trials: plan.trials,
            seed: plan.base_seed,
            modulation_order: plan.modulation_order,
            min_bits_per_point: plan.min_bits_per_point,
            sensing_waveform: plan.sensing_waveform,
            ber_waveforms: plan.ber_waveforms,
            hybrid_range_m: plan.hybrid_range_m,
            estimator: plan.estimator,
            velocity_threshold_kmh: 120.0,
            range_threshold_m: 30.0,
            combine: Combine::VelocityOnly,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Every key, in serialisation order.
pub const KEYS: &[&str] = &[
    "grid.m",
    "grid.n",
    "grid.delta_f_hz",
    "grid.carrier_hz",
    "grid.cp_len",
    "grid.c0_mps",
    "scenario.ranges_m",
    "scenario.velocities_kmh",
    "scenario.doppler_override_hz",
    "scenario.target_ranges_m",
    "scenario.target_velocities_kmh",
    "scenario.target_gains",
    "scenario.target_phases_deg",
    "scenario.snr_db",
    "scenario.waveform",
    "experiment.snr_db",
    "experiment.trials",
    "experiment.seed",
    "experiment.modulation_order",
    "experiment.min_bits_per_point",
    "experiment.sensing_waveform",
    "experiment.ber_waveforms",
    "experiment.hybrid_range_m",
    "estimator.max_targets",
    "estimator.stop_factor",
    "estimator.min_peak_ratio",
    "estimator.refine",
    "estimator.refine_sweeps",
    "estimator.refine_tol",
    "estimator.refit_passes",
    "selector.velocity_threshold_kmh",
    "selector.range_threshold_m",
    "selector.combine",
    "output.dir",
];

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse `{}`", v.trim()))
}

fn real(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = scalar(v)?;
    if x.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(x)
}

fn list<T>(v: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(item).collect()
}

fn waveform(v: &str) -> std::result::Result<Waveform, String> {
    v.trim().parse().map_err(|e: Error| e.to_string())
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let e = &mut self.estimator;
        match key {
            "grid.m" => self.m = scalar(v)?,
            "grid.n" => self.n = scalar(v)?,
            "grid.delta_f_hz" => self.delta_f_hz = real(v)?,
            "grid.carrier_hz" => self.carrier_hz = real(v)?,
            "grid.cp_len" => self.cp_len = scalar(v)?,
            "grid.c0_mps" => self.c0_mps = real(v)?,
            "scenario.ranges_m" => self.ranges_m = list(v, real)?,
            "scenario.velocities_kmh" => self.velocities_kmh = list(v, real)?,
            "scenario.doppler_override_hz" => self.doppler_override_hz = list(v, real)?,
            "scenario.target_ranges_m" => self.target_ranges_m = list(v, real)?,
            "scenario.target_velocities_kmh" => self.target_velocities_kmh = list(v, real)?,
            "scenario.target_gains" => self.target_gains = list(v, real)?,
            "scenario.target_phases_deg" => self.target_phases_deg = list(v, real)?,
            "scenario.snr_db" => self.scene_snr_db = real(v)?,
            "scenario.waveform" => self.scene_waveform = waveform(v)?,
            "experiment.snr_db" => self.snr_db = list(v, real)?,
            "experiment.trials" => self.trials = scalar(v)?,
            "experiment.seed" => self.seed = scalar(v)?,
            "experiment.modulation_order" => self.modulation_order = scalar(v)?,
            "experiment.min_bits_per_point" => self.min_bits_per_point = scalar(v)?,
            "experiment.sensing_waveform" => self.sensing_waveform = waveform(v)?,
            "experiment.ber_waveforms" => self.ber_waveforms = list(v, waveform)?,
            "experiment.hybrid_range_m" => self.hybrid_range_m = real(v)?,
            "estimator.max_targets" => e.max_targets = scalar(v)?,
            "estimator.stop_factor" => e.stop_factor = real(v)?,
            "estimator.min_peak_ratio" => e.min_peak_ratio = real(v)?,
            "estimator.refine" => e.refine = scalar(v)?,
            "estimator.refine_sweeps" => e.refine_sweeps = scalar(v)?,
            "estimator.refine_tol" => e.refine_tol = real(v)?,
            "estimator.refit_passes" => e.refit_passes = scalar(v)?,
            "selector.velocity_threshold_kmh" => self.velocity_threshold_kmh = real(v)?,
            "selector.range_threshold_m" => self.range_threshold_m = real(v)?,
            "selector.combine" => self.combine = v.trim().parse().map_err(|e: Error| e.to_string())?,
            "output.dir" => self.output_dir = PathBuf::from(v.trim()),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let e = &self.estimator;
        match key {
            "grid.m" => self.m.to_string(),
            "grid.n" => self.n.to_string(),
            "grid.delta_f_hz" => self.delta_f_hz.to_string(),
            "grid.carrier_hz" => self.carrier_hz.to_string(),
            "grid.cp_len" => self.cp_len.to_string(),
            "grid.c0_mps" => self.c0_mps.to_string(),
            "scenario.ranges_m" => join(&self.ranges_m),
            "scenario.velocities_kmh" => join(&self.velocities_kmh),
            "scenario.doppler_override_hz" => join(&self.doppler_override_hz),
            "scenario.target_ranges_m" => join(&self.target_ranges_m),
            "scenario.target_velocities_kmh" => join(&self.target_velocities_kmh),
            "scenario.target_gains" => join(&self.target_gains),
            "scenario.target_phases_deg" => join(&self.target_phases_deg),
            "scenario.snr_db" => self.scene_snr_db.to_string(),
            "scenario.waveform" => self.scene_waveform.to_string(),
            "experiment.snr_db" => join(&self.snr_db),
            "experiment.trials" => self.trials.to_string(),
            "experiment.seed" => self.seed.to_string(),
            "experiment.modulation_order" => self.modulation_order.to_string(),
            "experiment.min_bits_per_point" => self.min_bits_per_point.to_string(),
            "experiment.sensing_waveform" => self.sensing_waveform.to_string(),
            "experiment.ber_waveforms" => join(&self.ber_waveforms),
            "experiment.hybrid_range_m" => self.hybrid_range_m.to_string(),
            "estimator.max_targets" => e.max_targets.to_string(),
            "estimator.stop_factor" => e.stop_factor.to_string(),
            "estimator.min_peak_ratio" => e.min_peak_ratio.to_string(),
            "estimator.refine" => e.refine.to_string(),
            "estimator.refine_sweeps" => e.refine_sweeps.to_string(),
            "estimator.refine_tol" => e.refine_tol.to_string(),
            "estimator.refit_passes" => e.refit_passes.to_string(),
            "selector.velocity_threshold_kmh" => self.velocity_threshold_kmh.to_string(),
            "selector.range_threshold_m" => self.range_threshold_m.to_string(),
            "selector.combine" => self.combine.to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            _ => unreachable!("key list and accessor out of sync: {key}"),
        }
    }

    /// Parses a config; keys not present keep their defaults. The result is
    /// validated, and errors name the offending key and its line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    key: content.to_string(),
                    line,
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let fail = |message: String| Error::Config {
                key: key.to_string(),
                line,
                message,
            };
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(fail(format!("repeated key (first set on line {first})")));
            }
            cfg.set(key, value).map_err(fail)?;
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { key, message, .. } => Error::Config {
                line: seen.get(&key).copied().unwrap_or(0),
                key,
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let head = key.split('.').next().unwrap_or("");
            if head != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "# {head}");
                section = head;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    /// Semantic checks. Errors are `Error::Config` naming the key (line 0
    /// when the config was not read from text).
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.to_string(),
                line: 0,
                message,
            })
        };
        let positive = [
            ("grid.delta_f_hz", self.delta_f_hz),
            ("grid.carrier_hz", self.carrier_hz),
            ("grid.c0_mps", self.c0_mps),
            ("selector.velocity_threshold_kmh", self.velocity_threshold_kmh),
            ("selector.range_threshold_m", self.range_threshold_m),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive and finite, got {v}"));
            }
        }
        if self.m < 2 {
            return bad("grid.m", "must be at least 2".into());
        }
        if self.n == 0 {
            return bad("grid.n", "must be at least 1".into());
        }
        if let Err(e) = self.grid() {
            return bad("grid", e.to_string());
        }
        if self.trials == 0 {
            return bad("experiment.trials", "must be at least 1".into());
        }
        let nonneg = [
            ("scenario.ranges_m", &self.ranges_m),
            ("scenario.target_ranges_m", &self.target_ranges_m),
        ];
        for (key, xs) in nonneg {
            if xs.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return bad(key, "ranges must be non-negative and finite".into());
            }
        }
        if !(self.hybrid_range_m >= 0.0 && self.hybrid_range_m.is_finite()) {
            return bad("experiment.hybrid_range_m", "must be non-negative and finite".into());
        }
        let n = self.target_ranges_m.len();
        let parallel = [
            ("scenario.target_velocities_kmh", self.target_velocities_kmh.len()),
            ("scenario.target_gains", self.target_gains.len()),
            ("scenario.target_phases_deg", self.target_phases_deg.len()),
        ];
        for (key, len) in parallel {
            if len != n {
                return bad(key, format!("has {len} entries but scenario.target_ranges_m has {n}"));
            }
        }
        if self.snr_db.is_empty() {
            return bad("experiment.snr_db", "needs at least one SNR point".into());
        }
        if self.ber_waveforms.is_empty() {
            return bad("experiment.ber_waveforms", "needs at least one waveform".into());
        }
        if let Err(e) = crate::numerics::QamConstellation::<f64>::new(self.modulation_order) {
            return bad("experiment.modulation_order", e.to_string());
        }
        if let Err(e) = self.estimator.validate() {
            return bad("estimator", e.to_string());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec<f64>> {
        GridSpec::with_speed(self.m, self.n, self.delta_f_hz, self.carrier_hz, self.cp_len, self.c0_mps)
    }

    pub fn policy(&self) -> SelectionPolicy {
        SelectionPolicy {
            velocity_threshold_mps: kmh_to_mps(self.velocity_threshold_kmh),
            range_threshold_m: self.range_threshold_m,
            combine: self.combine,
        }
    }

    /// The `estimate` scene.
    pub fn targets(&self) -> Vec<Target<f64>> {
        (0..self.target_ranges_m.len())
            .map(|i| Target {
                range_m: self.target_ranges_m[i],
                velocity_mps: kmh_to_mps(self.target_velocities_kmh[i]),
                gain: Complex::from_polar(self.target_gains[i], self.target_phases_deg[i].to_radians()),
            })
            .collect()
    }

    pub fn plan(&self) -> Result<ExperimentPlan> {
        Ok(ExperimentPlan {
            grid: self.grid()?,
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            base_seed: self.seed,
            modulation_order: self.modulation_order,
            min_bits_per_point: self.min_bits_per_point,
            ranges_m: self.ranges_m.clone(),
            velocities_mps: self.velocities_kmh.iter().map(|&v| kmh_to_mps(v)).collect(),
            doppler_override_hz: self.doppler_override_hz.clone(),
            sensing_waveform: self.sensing_waveform,
            ber_waveforms: self.ber_waveforms.clone(),
            estimator: self.estimator,
            policy: self.policy(),
            hybrid_range_m: self.hybrid_range_m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
        assert_eq!(c.plan().unwrap(), ExperimentPlan::table_two());
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for key in KEYS {
            let mut d = RunConfig::default();
            d.set(key, &c.get(key)).unwrap();
            assert_eq!(d, c, "{key}");
        }
    }

    #[test]
    fn comments_lists_and_blank_lines() {
        let text = "# header\n\ngrid.m = 32   # more subcarriers\nexperiment.snr_db = 0, 5,10 ,15\nscenario.doppler_override_hz = 10, 20\nexperiment.ber_waveforms = otfs\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.m, 32);
        assert_eq!(c.snr_db, vec![0.0, 5.0, 10.0, 15.0]);
        assert_eq!(c.doppler_override_hz, vec![10.0, 20.0]);
        assert_eq!(c.ber_waveforms, vec![Waveform::Otfs]);
        let c = RunConfig::parse("scenario.target_ranges_m =\nscenario.target_velocities_kmh=\nscenario.target_gains=\nscenario.target_phases_deg=").unwrap();
        assert!(c.targets().is_empty());
    }

    fn err(text: &str) -> (String, usize) {
        match RunConfig::parse(text).unwrap_err() {
            Error::Config { key, line, .. } => (key, line),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_name_key_and_line() {
        assert_eq!(err("\ngrid.delta_f_hz = -1\n"), ("grid.delta_f_hz".into(), 2));
        assert_eq!(err("grid.bogus = 1"), ("grid.bogus".into(), 1));
        assert_eq!(err("grid.m = 4\ngrid.m = 8"), ("grid.m".into(), 2));
        assert_eq!(err("a\n"), ("a".into(), 1));
        assert_eq!(err("experiment.trials = many"), ("experiment.trials".into(), 1));
        assert_eq!(err("experiment.trials = 0"), ("experiment.trials".into(), 1));
        assert_eq!(err("grid.c0_mps = nan"), ("grid.c0_mps".into(), 1));
        assert_eq!(err("scenario.target_gains = 1"), ("scenario.target_gains".into(), 1));
        let msg = RunConfig::parse("grid.delta_f_hz = -1").unwrap_err().to_string();
        assert!(msg.contains("grid.delta_f_hz"), "{msg}");
    }

    proptest! {
        #[test]
        fn round_trip(m in 2usize..64, df in 1.0f64..1e6, snr in proptest::collection::vec(-20.0f64..40.0, 1..6),
                      vel in proptest::collection::vec(-600.0f64..600.0, 0..5), seed in any::<u64>(), tol in 1e-6f64..0.5) {
            let mut c = RunConfig { m, delta_f_hz: df, snr_db: snr, velocities_kmh: vel, seed, ..Default::default() };
            c.estimator.refine_tol = tol;
            let again = RunConfig::parse(&c.serialize()).unwrap();
            prop_assert_eq!(&again, &c);
            prop_assert_eq!(again.serialize(), c.serialize());
        }
    }
}
