//! Admission, buffering, dependency resolution and rejection.
//!
//! A timestamped transaction commits together with its whole dependency
//! closure once every member is timestamped, none is rejected, and all
//! members are pairwise within `delta` of each other. Otherwise it waits in
//! the buffer, where periodic sweeps enforce the age (`tau_max`), attempt
//! (`deps_max`) and capacity (`buffer_max`) limits.
//!
//! Sweep order:
//! 1. reject entries older than `tau_max` (measured from τ) as `TimedOut`;
//! 2. re-attempt resolution in buffer order; a failed attempt increments the
//!    entry's counter, and an entry whose counter would pass `deps_max` is
//!    rejected `AttemptsExhausted`;
//! 3. reject every entry whose closure contains a rejected transaction as
//!    `DependencyRejected`, to a fixpoint;
//! 4. evict oldest-τ entries (ties by id) as `BufferEvicted` until the
//!    buffer fits, propagating step 3 after each eviction;
//! 5. notify the origin rollup once per rejection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProtocolConfig, RejectReason, RollupId, Status, Tick, TxId};
use crate::pool::{PoolError, PoolState};
use crate::proofs;

/// `|tau_a - tau_b| <= delta`.
pub fn compatible(tau_a: Tick, tau_b: Tick, delta: Tick) -> bool {
    tau_a.abs_diff(tau_b) <= delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub txid: TxId,
    pub tau: Tick,
    pub entered_at: Tick,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub target: RollupId,
    pub txid: TxId,
    pub reason: RejectReason,
    pub issued_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdmitOutcome {
    CommittedGroup(BTreeSet<TxId>),
    Buffered,
    Rejected(RejectReason),
}

/// Why a closure cannot commit yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaitReason {
    /// A dependency has not been published.
    Unpublished,
    /// A member has not reached quorum.
    Untimestamped,
    /// Two members are further than `delta` apart.
    Incompatible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    /// Closure can commit; holds the members not yet committed.
    Ready(BTreeSet<TxId>),
    /// A member of the closure was rejected.
    Doomed(TxId),
    Waiting(WaitReason),
}

/// State changes produced by the scheduler, in the order they happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedEvent {
    Committed { txid: TxId, root: TxId, group: Vec<TxId>, tau: Tick, via_proof: bool },
    Buffered { txid: TxId, tau: Tick },
    AttemptFailed { txid: TxId, attempts: u32, wait: WaitReason },
    Rejected { txid: TxId, reason: RejectReason, attempts: u32 },
    Notified(Notification),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("{0} is already terminal")]
    AlreadyTerminal(TxId),
    #[error("{0} has not been timestamped")]
    NotTimestamped(TxId),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

#[derive(Debug, Clone)]
pub struct SchedulerState {
    buffer: BTreeMap<(Tick, TxId), BufferEntry>,
    committed: BTreeSet<TxId>,
    delta: Tick,
    tau_max: Tick,
    buffer_max: usize,
    deps_max: u32,
}

impl SchedulerState {
    pub fn new(config: &ProtocolConfig) -> Self {
        Self {
            buffer: BTreeMap::new(),
            committed: BTreeSet::new(),
            delta: config.delta,
            tau_max: config.tau_max,
            buffer_max: config.buffer_max,
            deps_max: config.deps_max,
        }
    }

    /// Buffer entries in eviction order (oldest τ first, ties by id).
    pub fn buffer(&self) -> impl Iterator<Item = &BufferEntry> {
        self.buffer.values()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn entry(&self, txid: TxId, tau: Tick) -> Option<&BufferEntry> {
        self.buffer.get(&(tau, txid))
    }

    pub fn committed(&self) -> &BTreeSet<TxId> {
        &self.committed
    }

    /// Can the closure of `root` commit right now?
    pub fn resolve(&self, pool: &PoolState, root: TxId) -> Resolution {
        let closure = pool.closure(root);
        let mut lo = Tick::MAX;
        let mut hi = Tick::MIN;
        let mut untimestamped = false;
        let mut pending = BTreeSet::new();
        for id in &closure.members {
            let rec = pool.get_record(id).expect("closure members are published");
            if let Status::Rejected(_) = rec.status {
                return Resolution::Doomed(*id);
            }
            match rec.tau {
                Some(t) => {
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
                None => untimestamped = true,
            }
            if rec.status != Status::Committed {
                pending.insert(*id);
            }
        }
        if !closure.unresolved.is_empty() {
            return Resolution::Waiting(WaitReason::Unpublished);
        }
        if untimestamped {
            return Resolution::Waiting(WaitReason::Untimestamped);
        }
        if !compatible(lo, hi, self.delta) {
            return Resolution::Waiting(WaitReason::Incompatible);
        }
        Resolution::Ready(pending)
    }

    /// First admission of a freshly timestamped (and authenticated)
    /// transaction: commit its closure now or park it in the buffer.
    pub fn admit(
        &mut self,
        pool: &mut PoolState,
        txid: TxId,
        now: Tick,
        out: &mut Vec<SchedEvent>,
    ) -> Result<AdmitOutcome, SchedError> {
        let rec = pool.get_record(&txid).ok_or(PoolError::UnknownTx(txid))?;
        let tau = match (rec.status, rec.tau) {
            (Status::Timestamped, Some(t)) => t,
            (s, _) if s.is_terminal() => return Err(SchedError::AlreadyTerminal(txid)),
            _ => return Err(SchedError::NotTimestamped(txid)),
        };
        match self.resolve(pool, txid) {
            Resolution::Ready(group) => {
                self.commit_group(pool, txid, &group, false, out)?;
                Ok(AdmitOutcome::CommittedGroup(group))
            }
            Resolution::Doomed(_) | Resolution::Waiting(_) => {
                pool.set_status(txid, Status::Buffered)?;
                self.buffer.insert((tau, txid), BufferEntry { txid, tau, entered_at: now, attempts: 0 });
                out.push(SchedEvent::Buffered { txid, tau });
                Ok(AdmitOutcome::Buffered)
            }
        }
    }

    fn commit_group(
        &mut self,
        pool: &mut PoolState,
        root: TxId,
        group: &BTreeSet<TxId>,
        via_proof: bool,
        out: &mut Vec<SchedEvent>,
    ) -> Result<(), SchedError> {
        let members: Vec<TxId> = group.iter().copied().collect();
        for id in &members {
            let tau = pool.tau(id).ok_or(SchedError::NotTimestamped(*id))?;
            pool.set_status(*id, Status::Committed)?;
            self.buffer.remove(&(tau, *id));
            self.committed.insert(*id);
            out.push(SchedEvent::Committed { txid: *id, root, group: members.clone(), tau, via_proof });
        }
        Ok(())
    }

    /// Terminal rejection of a timestamped or buffered transaction.
    pub fn reject(
        &mut self,
        pool: &mut PoolState,
        txid: TxId,
        reason: RejectReason,
        now: Tick,
    ) -> Result<Notification, SchedError> {
        let rec = pool.get_record(&txid).ok_or(PoolError::UnknownTx(txid))?;
        if rec.status.is_terminal() {
            return Err(SchedError::AlreadyTerminal(txid));
        }
        let tau = rec.tau.ok_or(SchedError::NotTimestamped(txid))?;
        pool.set_status(txid, Status::Rejected(reason))?;
        self.buffer.remove(&(tau, txid));
        Ok(Notification { target: txid.rollup, txid, reason, issued_at: now })
    }

    #[allow(clippy::too_many_arguments)]
    fn reject_logged(
        &mut self,
        pool: &mut PoolState,
        txid: TxId,
        reason: RejectReason,
        attempts: u32,
        now: Tick,
        out: &mut Vec<SchedEvent>,
        notes: &mut Vec<Notification>,
    ) -> Result<(), SchedError> {
        notes.push(self.reject(pool, txid, reason, now)?);
        out.push(SchedEvent::Rejected { txid, reason, attempts });
        Ok(())
    }

    /// Rejects buffered entries whose closure holds a rejected member, until
    /// no such entry remains.
    fn propagate(
        &mut self,
        pool: &mut PoolState,
        now: Tick,
        out: &mut Vec<SchedEvent>,
        notes: &mut Vec<Notification>,
    ) -> Result<(), SchedError> {
        loop {
            let doomed: Vec<BufferEntry> = self
                .buffer
                .values()
                .filter(|e| matches!(self.resolve(pool, e.txid), Resolution::Doomed(_)))
                .copied()
                .collect();
            if doomed.is_empty() {
                return Ok(());
            }
            for e in doomed {
                self.reject_logged(pool, e.txid, RejectReason::DependencyRejected, e.attempts, now, out, notes)?;
            }
        }
    }

    /// One periodic check over the buffer. Notifications come last, in id order.
    pub fn sweep(&mut self, pool: &mut PoolState, now: Tick) -> Result<Vec<SchedEvent>, SchedError> {
        let mut out = Vec::new();
        let mut notes = Vec::new();

        let snapshot: Vec<BufferEntry> = self.buffer.values().copied().collect();
        for e in &snapshot {
            if now.saturating_sub(e.tau) > self.tau_max {
                self.reject_logged(pool, e.txid, RejectReason::TimedOut, e.attempts, now, &mut out, &mut notes)?;
            }
        }

        let snapshot: Vec<(Tick, TxId)> = self.buffer.keys().copied().collect();
        for key in snapshot {
            let Some(entry) = self.buffer.get(&key).copied() else { continue };
            match self.resolve(pool, entry.txid) {
                Resolution::Ready(group) => self.commit_group(pool, entry.txid, &group, false, &mut out)?,
                Resolution::Doomed(_) => self.reject_logged(
                    pool,
                    entry.txid,
                    RejectReason::DependencyRejected,
                    entry.attempts,
                    now,
                    &mut out,
                    &mut notes,
                )?,
                Resolution::Waiting(wait) => {
                    if entry.attempts >= self.deps_max {
                        self.reject_logged(
                            pool,
                            entry.txid,
                            RejectReason::AttemptsExhausted,
                            entry.attempts,
                            now,
                            &mut out,
                            &mut notes,
                        )?;
                    } else {
                        let slot = self.buffer.get_mut(&key).unwrap();
                        slot.attempts += 1;
                        out.push(SchedEvent::AttemptFailed { txid: entry.txid, attempts: slot.attempts, wait });
                    }
                }
            }
        }

        self.propagate(pool, now, &mut out, &mut notes)?;

        while self.buffer.len() > self.buffer_max {
            let oldest = *self.buffer.values().next().unwrap();
            self.reject_logged(
                pool,
                oldest.txid,
                RejectReason::BufferEvicted,
                oldest.attempts,
                now,
                &mut out,
                &mut notes,
            )?;
            self.propagate(pool, now, &mut out, &mut notes)?;
        }

        notes.sort_by_key(|n| n.txid);
        out.extend(notes.into_iter().map(SchedEvent::Notified));
        Ok(out)
    }

    /// Proof-backed commits of buffered entries whose closure has become
    /// resolvable, ahead of the next sweep.
    ///
    /// A group is only committed here when every uncommitted member will
    /// still be within `tau_max` at `next_sweep`, so the set of committed
    /// transactions matches what the sweep at `next_sweep` would produce.
    pub fn fast_path(
        &mut self,
        pool: &mut PoolState,
        next_sweep: Option<Tick>,
        out: &mut Vec<SchedEvent>,
    ) -> Result<(), SchedError> {
        let Some(next_sweep) = next_sweep else { return Ok(()) };
        let snapshot: Vec<(Tick, TxId)> = self.buffer.keys().copied().collect();
        for key in snapshot {
            if !self.buffer.contains_key(&key) {
                continue;
            }
            let root = key.1;
            let Resolution::Ready(group) = self.resolve(pool, root) else { continue };
            let survives =
                group.iter().all(|id| pool.tau(id).is_some_and(|t| next_sweep.saturating_sub(t) <= self.tau_max));
            if !survives {
                continue;
            }
            let closure = pool.closure(root).members;
            let Ok(artifact) = proofs::make_dependency_proof(&closure, pool, self.delta) else { continue };
            let statement =
                proofs::dependency_statement(&proofs::group_timestamps(&closure, pool).expect("members timestamped"));
            if proofs::verify_proof(&artifact, &statement) {
                self.commit_group(pool, root, &group, true, out)?;
            }
        }
        Ok(())
    }
}
