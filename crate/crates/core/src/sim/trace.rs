//! Trace records: one JSON object per line, `{"tick": .., "kind": .., ...}`.
//! Field names are listed in `docs/trace-format.md`.

use serde::{Deserialize, Serialize};

use crate::enforcement::{ClaimKind, ClaimRejection};
use crate::model::{hex_digest, Digest, ProtocolConfig, RejectReason, RollupId, Tick, TxId};
use crate::scheduler::WaitReason;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceEvent {
    RunStarted {
        scenario: String,
        seed: u64,
        sweep_interval: Tick,
        end_at: Tick,
        rollups: u32,
        clock_skews: Vec<i64>,
        config: ProtocolConfig,
    },
    Staked {
        rollup: RollupId,
        amount: u64,
        staked: u64,
    },
    NodeFailed {
        node: u32,
    },
    Published {
        tx: TxId,
        deps: Vec<TxId>,
        key_id: u64,
        #[serde(with = "hex_digest")]
        payload_digest: Digest,
        #[serde(with = "hex_digest")]
        tag: Digest,
    },
    PublishRefused {
        tx: TxId,
        staked: u64,
        required: u64,
    },
    Delivered {
        tx: TxId,
        node: u32,
        receipt: Tick,
    },
    DeliveryDropped {
        tx: TxId,
        node: u32,
    },
    TimestampAssigned {
        tx: TxId,
        tau: Tick,
    },
    Admitted {
        tx: TxId,
    },
    Buffered {
        tx: TxId,
        tau: Tick,
    },
    Committed {
        tx: TxId,
        tau: Tick,
        root: TxId,
        group: Vec<TxId>,
        via_proof: bool,
    },
    AttemptFailed {
        tx: TxId,
        attempts: u32,
        wait: WaitReason,
    },
    Rejected {
        tx: TxId,
        reason: RejectReason,
        attempts: u32,
    },
    Notified {
        tx: TxId,
        target: RollupId,
        reason: RejectReason,
    },
    SweepStart {},
    SweepEnd {
        buffered: usize,
    },
    ExecutionClaimed {
        rollup: RollupId,
        tx: TxId,
        executed_deps: Vec<TxId>,
        #[serde(with = "hex_digest")]
        digest: Digest,
    },
    ClaimReported {
        watcher: u32,
        accused: RollupId,
        tx: TxId,
        claim: ClaimKind,
    },
    Slashed {
        rollup: RollupId,
        tx: TxId,
        claim: ClaimKind,
        watcher: u32,
        amount: u64,
        staked: u64,
    },
    ClaimRejected {
        watcher: u32,
        accused: RollupId,
        tx: TxId,
        claim: ClaimKind,
        why: ClaimRejection,
    },
    End {},
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// A full run's ordered records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, tick: Tick, event: TraceEvent) {
        self.records.push(TraceRecord { tick, event });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses newline-delimited records; blank lines are skipped.
    /// Errors carry the 1-based line number.
    pub fn from_jsonl(text: &str) -> Result<Self, (usize, serde_json::Error)> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| (i + 1, e))?);
        }
        Ok(Self { records })
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
