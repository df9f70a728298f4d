//! The decentralized common pool: `n` simulated nodes receipt published
//! transactions and the quorum rule assigns the canonical timestamp τ.
//!
//! τ is the q-th smallest per-node receipt time at the moment the q-th
//! distinct receipt arrives; it never changes afterwards.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::enforcement::StakeLedger;
use crate::model::{closure_with, Closure, ProtocolConfig, RollupId, Status, Tick, Transaction, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolRecord {
    pub tx: Transaction,
    /// node index → local receipt time
    pub receipts: BTreeMap<u32, Tick>,
    pub tau: Option<Tick>,
    pub status: Status,
    pub published_at: Tick,
}

/// A delivery the network will perform: `tx` reaches `node` at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Delivery {
    pub at: Tick,
    pub txid: TxId,
    pub node: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("transaction {0} was already submitted")]
    DuplicateTxId(TxId),
    #[error("{rollup} has stake {staked}, below the required {required}")]
    InsufficientStake { rollup: RollupId, staked: u64, required: u64 },
    #[error("unknown transaction {0}")]
    UnknownTx(TxId),
    #[error("node {node} already receipted {txid}")]
    DuplicateReceipt { txid: TxId, node: u32 },
    #[error("node index {0} out of range")]
    NoSuchNode(u32),
    #[error("illegal status transition for {txid}: {from:?} -> {to:?}")]
    IllegalTransition { txid: TxId, from: Status, to: Status },
}

#[derive(Debug, Clone)]
pub struct PoolState {
    records: BTreeMap<TxId, PoolRecord>,
    node_clock_skews: Vec<i64>,
    quorum: usize,
    min_stake: u64,
}

impl PoolState {
    pub fn new(config: &ProtocolConfig) -> Self {
        Self {
            records: BTreeMap::new(),
            node_clock_skews: vec![0; config.node_count as usize],
            quorum: config.quorum as usize,
            min_stake: config.min_stake,
        }
    }

    /// Per-node offsets added to the simulated clock when a node records a
    /// receipt. Missing entries are zero.
    pub fn with_clock_skews(mut self, skews: &[i64]) -> Self {
        for (slot, s) in self.node_clock_skews.iter_mut().zip(skews) {
            *slot = *s;
        }
        self
    }

    pub fn node_count(&self) -> u32 {
        self.node_clock_skews.len() as u32
    }

    /// Accepts `tx` and returns one delivery per node at `now + delay(node)`.
    pub fn publish(
        &mut self,
        tx: Transaction,
        now: Tick,
        stakes: &StakeLedger,
        mut delay: impl FnMut(u32) -> Tick,
    ) -> Result<Vec<Delivery>, PoolError> {
        if self.records.contains_key(&tx.id) {
            return Err(PoolError::DuplicateTxId(tx.id));
        }
        let rollup = tx.id.rollup;
        if !stakes.can_publish(rollup, self.min_stake) {
            return Err(PoolError::InsufficientStake {
                rollup,
                staked: stakes.staked(rollup),
                required: self.min_stake,
            });
        }
        let txid = tx.id;
        let deliveries =
            (0..self.node_count()).map(|node| Delivery { at: now.saturating_add(delay(node)), txid, node }).collect();
        self.records.insert(
            txid,
            PoolRecord { tx, receipts: BTreeMap::new(), tau: None, status: Status::Pending, published_at: now },
        );
        Ok(deliveries)
    }

    /// Local receipt time node `node` stamps at simulated time `now`.
    pub fn local_time(&self, node: u32, now: Tick) -> Tick {
        let skew = self.node_clock_skews.get(node as usize).copied().unwrap_or(0);
        now.saturating_add_signed(skew)
    }

    /// Records node `node` receiving `txid`. Returns τ when this receipt is
    /// the one that first reaches quorum.
    pub fn record_receipt(&mut self, txid: TxId, node: u32, now: Tick) -> Result<Option<Tick>, PoolError> {
        if node >= self.node_count() {
            return Err(PoolError::NoSuchNode(node));
        }
        let local = self.local_time(node, now);
        let quorum = self.quorum;
        let rec = self.records.get_mut(&txid).ok_or(PoolError::UnknownTx(txid))?;
        if rec.receipts.contains_key(&node) {
            return Err(PoolError::DuplicateReceipt { txid, node });
        }
        rec.receipts.insert(node, local);
        if rec.tau.is_some() || rec.receipts.len() != quorum {
            return Ok(None);
        }
        let mut times: Vec<Tick> = rec.receipts.values().copied().collect();
        times.sort_unstable();
        let tau = times[quorum - 1];
        rec.tau = Some(tau);
        rec.status = Status::Timestamped;
        Ok(Some(tau))
    }

    pub fn get_record(&self, txid: &TxId) -> Option<&PoolRecord> {
        self.records.get(txid)
    }

    pub fn records(&self) -> impl Iterator<Item = &PoolRecord> {
        self.records.values()
    }

    pub fn status(&self, txid: &TxId) -> Option<Status> {
        self.records.get(txid).map(|r| r.status)
    }

    pub fn tau(&self, txid: &TxId) -> Option<Tick> {
        self.records.get(txid).and_then(|r| r.tau)
    }

    /// Moves `txid` along the lifecycle; illegal transitions are refused.
    pub fn set_status(&mut self, txid: TxId, to: Status) -> Result<Status, PoolError> {
        let rec = self.records.get_mut(&txid).ok_or(PoolError::UnknownTx(txid))?;
        if !rec.status.can_transition_to(to) {
            return Err(PoolError::IllegalTransition { txid, from: rec.status, to });
        }
        Ok(std::mem::replace(&mut rec.status, to))
    }

    /// Dependency closure of `root` over every published transaction.
    pub fn closure(&self, root: TxId) -> Closure {
        closure_with(root, |id| self.records.get(id).map(|r| &r.tx.deps))
    }

    pub fn committed(&self) -> BTreeSet<TxId> {
        self.records.values().filter(|r| r.status == Status::Committed).map(|r| r.tx.id).collect()
    }
}
