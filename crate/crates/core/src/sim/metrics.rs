use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{RejectReason, RollupId, Tick};

/// Summary of one run.
///
/// Occupancy is sampled at every sweep boundary (after the sweep). Commit
/// latency is `commit tick - τ`, saturating at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub published: u64,
    pub refused: u64,
    pub committed: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    /// Published but not terminal when the run ended.
    pub unsettled: u64,
    pub sweeps: u64,
    pub buffer_occupancy_mean: f64,
    pub buffer_occupancy_max: usize,
    pub commit_latency_mean: f64,
    pub commit_latency_max: Tick,
    pub slash_total: BTreeMap<RollupId, u64>,
}

impl Metrics {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn slashed_total(&self) -> u64 {
        self.slash_total.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Running sums the engine feeds while it executes.
#[derive(Debug, Clone, Default)]
pub(crate) struct MetricsAcc {
    pub published: u64,
    pub refused: u64,
    pub committed: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    pub sweeps: u64,
    pub occupancy_sum: u64,
    pub occupancy_max: usize,
    pub latency_sum: u64,
    pub latency_max: Tick,
    pub slash_total: BTreeMap<RollupId, u64>,
}

impl MetricsAcc {
    pub fn new(rollups: u32) -> Self {
        Self {
            rejected: RejectReason::ALL.iter().map(|r| (*r, 0)).collect(),
            slash_total: (0..rollups).map(|r| (RollupId(r), 0)).collect(),
            ..Self::default()
        }
    }

    pub fn finish(self, unsettled: u64) -> Metrics {
        let mean = |sum: u64, n: u64| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
        Metrics {
            published: self.published,
            refused: self.refused,
            committed: self.committed,
            rejected: self.rejected,
            unsettled,
            sweeps: self.sweeps,
            buffer_occupancy_mean: mean(self.occupancy_sum, self.sweeps),
            buffer_occupancy_max: self.occupancy_max,
            commit_latency_mean: mean(self.latency_sum, self.committed),
            commit_latency_max: self.latency_max,
            slash_total: self.slash_total,
        }
    }
}
