//! Threshold rule choosing OTFS for high-mobility (or distant) scenes and
//! OFDM otherwise.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::EstimatedTarget;
use crate::frame_grid::kmh_to_mps;
use crate::scalar::Real;
use crate::waveform::Waveform;

/// How the velocity and range tests combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    #[default]
    VelocityOnly,
    RangeOnly,
    Any,
    All,
}

impl Combine {
    pub fn name(self) -> &'static str {
        match self {
            Combine::VelocityOnly => "velocity_only",
            Combine::RangeOnly => "range_only",
            Combine::Any => "any",
            Combine::All => "all",
        }
    }
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity_only" => Ok(Combine::VelocityOnly),
            "range_only" => Ok(Combine::RangeOnly),
            "any" => Ok(Combine::Any),
            "all" => Ok(Combine::All),
            other => Err(Error::invalid(format!(
                "unknown combine rule `{other}` (velocity_only, range_only, any, all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub velocity_threshold_mps: f64,
    pub range_threshold_m: f64,
    pub combine: Combine,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            velocity_threshold_mps: kmh_to_mps(120.0),
            range_threshold_m: 30.0,
            combine: Combine::VelocityOnly,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_threshold_mps > 0.0 && self.velocity_threshold_mps.is_finite()) {
            return Err(Error::invalid("velocity threshold must be positive"));
        }
        if !(self.range_threshold_m > 0.0 && self.range_threshold_m.is_finite()) {
            return Err(Error::invalid("range threshold must be positive"));
        }
        Ok(())
    }
}

/// The chosen waveform and the estimate that decided it (`None` when no
/// target was detected).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformChoice<T> {
    pub waveform: Waveform,
    pub deciding: Option<EstimatedTarget<T>>,
}

fn largest_by<T: Real>(targets: &[EstimatedTarget<T>], key: impl Fn(&EstimatedTarget<T>) -> T) -> Option<&EstimatedTarget<T>> {
    targets.iter().fold(None, |best, t| match best {
        Some(b) if key(b) >= key(t) => Some(b),
        _ => Some(t),
    })
}

/// OTFS when the deciding value is at or above its threshold.
///
/// The velocity test looks at the target with the largest `|velocity|`, the
/// range test at the farthest target. An empty list selects OFDM.
pub fn select_waveform<T: Real>(targets: &[EstimatedTarget<T>], policy: &SelectionPolicy) -> WaveformChoice<T> {
    let fastest = largest_by(targets, |t| t.velocity_mps.abs());
    let farthest = largest_by(targets, |t| t.range_m);
    let (Some(fastest), Some(farthest)) = (fastest, farthest) else {
        return WaveformChoice {
            waveform: Waveform::Ofdm,
            deciding: None,
        };
    };
    let fast = fastest.velocity_mps.abs().to_f64_lossy() >= policy.velocity_threshold_mps;
    let far = farthest.range_m.to_f64_lossy() >= policy.range_threshold_m;
    let (otfs, deciding) = match policy.combine {
        Combine::VelocityOnly => (fast, fastest),
        Combine::RangeOnly => (far, farthest),
        Combine::Any => (fast || far, if fast || !far { fastest } else { farthest }),
        Combine::All => (fast && far, if !fast || far { fastest } else { farthest }),
    };
    WaveformChoice {
        waveform: if otfs { Waveform::Otfs } else { Waveform::Ofdm },
        deciding: Some(deciding.clone()),
    }
}
