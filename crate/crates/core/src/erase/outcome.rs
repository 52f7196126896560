use serde::Serialize;

use crate::units::Nanos;

/// One erase pulse followed by its verify-read.
#[derive(Serialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoopRecord {
    pub level: u32,
    pub pulse: Nanos,
    pub fail_count: u32,
    /// Extra pulse issued because a predicted-final pulse fell short.
    pub retry: bool,
}

/// Full record of one erase operation.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct EraseOutcome {
    pub block: u32,
    pub loops: Vec<LoopRecord>,
    pub total_latency: Nanos,
    /// False when the block could not be erased and must be retired.
    pub completed: bool,
    pub deficit_quanta: u32,
    pub mispredictions: u32,
    /// Lookups whose pulse was expected to finish the erase.
    pub predictions: u32,
    pub stress_added: f64,
    pub shallow: bool,
}

impl EraseOutcome {
    pub fn new(block: u32) -> Self {
        EraseOutcome {
            block,
            loops: Vec::new(),
            total_latency: 0,
            completed: false,
            deficit_quanta: 0,
            mispredictions: 0,
            predictions: 0,
            stress_added: 0.0,
            shallow: false,
        }
    }

    pub(crate) fn push(&mut self, rec: LoopRecord, t_vr: Nanos, stress: f64) {
        self.total_latency += rec.pulse + t_vr;
        self.stress_added += stress;
        self.loops.push(rec);
    }

    /// Highest ladder level used, i.e. the number of ISPE loops.
    pub fn ispe_loops(&self) -> u32 {
        self.loops.iter().map(|l| l.level).max().unwrap_or(0)
    }

    pub fn final_fail(&self) -> Option<u32> {
        self.loops.last().map(|l| l.fail_count)
    }

    /// Total pulse time, excluding verify-reads.
    pub fn pulse_time(&self) -> Nanos {
        self.loops.iter().map(|l| l.pulse).sum()
    }
}
