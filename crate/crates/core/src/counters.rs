//! Complex multiply-add accounting by processing stage.
//!
//! Counters are thread-local: a Monte Carlo job runs on one worker thread, so
//! the engine snapshots the counters around each job and sums the deltas.
//! Transform costs are attributed to whichever stage is active when the
//! transform runs (see [`StageGuard`]).

use std::cell::Cell;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    OfdmMod,
    OtfsMod,
    MfMetric,
    Refinement,
    Mmse,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::OfdmMod,
        Stage::OtfsMod,
        Stage::MfMetric,
        Stage::Refinement,
        Stage::Mmse,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::OfdmMod => "ofdm_mod",
            Stage::OtfsMod => "otfs_mod",
            Stage::MfMetric => "mf_metric",
            Stage::Refinement => "refinement",
            Stage::Mmse => "mmse",
        }
    }
}

/// Multiply-add counts per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub ofdm_mod: u64,
    pub otfs_mod: u64,
    pub mf_metric: u64,
    pub refinement: u64,
    pub mmse: u64,
}

impl OpCounts {
    pub fn get(&self, stage: Stage) -> u64 {
        match stage {
            Stage::OfdmMod => self.ofdm_mod,
            Stage::OtfsMod => self.otfs_mod,
            Stage::MfMetric => self.mf_metric,
            Stage::Refinement => self.refinement,
            Stage::Mmse => self.mmse,
        }
    }

    fn from_array(a: [u64; 5]) -> Self {
        OpCounts {
            ofdm_mod: a[0],
            otfs_mod: a[1],
            mf_metric: a[2],
            refinement: a[3],
            mmse: a[4],
        }
    }

    fn to_array(self) -> [u64; 5] {
        [
            self.ofdm_mod,
            self.otfs_mod,
            self.mf_metric,
            self.refinement,
            self.mmse,
        ]
    }
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.to_array(), rhs.to_array());
        OpCounts::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, rhs: Self) -> Self {
        let (a, b) = (self.to_array(), rhs.to_array());
        OpCounts::from_array(std::array::from_fn(|i| a[i].saturating_sub(b[i])))
    }
}

thread_local! {
    static COUNTS: Cell<[u64; 5]> = const { Cell::new([0; 5]) };
    static ACTIVE: Cell<Option<Stage>> = const { Cell::new(None) };
}

/// Snapshot of this thread's counters.
pub fn op_counters() -> OpCounts {
    OpCounts::from_array(COUNTS.with(Cell::get))
}

pub fn reset_op_counters() {
    COUNTS.with(|c| c.set([0; 5]));
}

/// Adds `n` multiply-adds to `stage`.
pub fn record(stage: Stage, n: u64) {
    COUNTS.with(|c| {
        let mut v = c.get();
        v[stage.index()] += n;
        c.set(v);
    });
}

/// Adds `n` to the currently active stage, if any.
pub(crate) fn record_active(n: u64) {
    if let Some(stage) = ACTIVE.with(Cell::get) {
        record(stage, n);
    }
}

/// Makes `stage` the attribution target until dropped; nests by restoring
/// the previous stage.
pub struct StageGuard {
    previous: Option<Stage>,
}

pub fn enter(stage: Stage) -> StageGuard {
    let previous = ACTIVE.with(|a| a.replace(Some(stage)));
    StageGuard { previous }
}

impl Drop for StageGuard {
    fn drop(&mut self) {
        ACTIVE.with(|a| a.set(self.previous));
    }
}

/// Cost model of one length-`len` transform: `len·⌈log2 len⌉` butterfly
/// multiply-adds plus `len` normalisation multiplies.
pub fn transform_cost(len: usize) -> u64 {
    let len = len as u64;
    let log = if len <= 1 {
        0
    } else {
        64 - (len - 1).leading_zeros() as u64
    };
    len * log + len
}
