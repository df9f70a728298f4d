//! Staking, misbehavior claims and slashing.
//!
//! Rollups post collateral before they may publish. Rollups also announce
//! which transactions they executed ([`ExecutionClaim`]); watchers turn an
//! announcement that contradicts the pool's records into a
//! [`MisbehaviorClaim`] whose evidence is a misbehavior [`ProofArtifact`].
//! The ledger adjudicates each claim against its own view of the pool and
//! slashes `floor(slash_fraction × staked)` when the evidence checks out.
//!
//! Misbehavior statements are encoded as
//!
//! ```text
//! 0x02 ‖ claim kind (1) ‖ accused (u32 BE) ‖ tx rollup (u32 BE) ‖ tx seq (u64 BE)
//!      ‖ execution digest (32) ‖ pool status code (1) ‖ skipped dep rollup (u32 BE) ‖ skipped dep seq (u64 BE)
//! ```
//!
//! The skipped-dependency fields are zero unless the claim is
//! [`ClaimKind::SkippedDependency`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Digest, Fraction, RollupId, Status, Tick, TxId};
use crate::pool::PoolState;
use crate::proofs::{self, ProofArtifact, ProofKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeAccount {
    pub rollup: RollupId,
    pub staked: u64,
    pub slashed_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClaimKind {
    /// Executed a transaction the pool never committed.
    ExecutedWithoutValidation,
    /// Executed a transaction the pool rejected.
    ExecutedRejected,
    /// Executed a transaction without executing all of its declared dependencies.
    SkippedDependency,
}

impl ClaimKind {
    fn code(self) -> u8 {
        match self {
            ClaimKind::ExecutedWithoutValidation => 0,
            ClaimKind::ExecutedRejected => 1,
            ClaimKind::SkippedDependency => 2,
        }
    }
}

/// A rollup's public announcement that it executed `txid`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionClaim {
    pub rollup: RollupId,
    pub txid: TxId,
    pub executed_deps: BTreeSet<TxId>,
    pub at: Tick,
}

impl ExecutionClaim {
    pub fn digest(&self) -> Digest {
        let mut buf = Vec::with_capacity(24 + 12 * self.executed_deps.len());
        buf.extend_from_slice(&self.rollup.0.to_be_bytes());
        buf.extend_from_slice(&self.txid.rollup.0.to_be_bytes());
        buf.extend_from_slice(&self.txid.seq.to_be_bytes());
        buf.extend_from_slice(&self.at.to_be_bytes());
        for d in &self.executed_deps {
            buf.extend_from_slice(&d.rollup.0.to_be_bytes());
            buf.extend_from_slice(&d.seq.to_be_bytes());
        }
        proofs::sha256(&[b"dcp/exec/v1", &buf])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisbehaviorClaim {
    pub accused: RollupId,
    pub txid: TxId,
    pub claimed: ClaimKind,
    pub evidence: ProofArtifact,
    pub watcher: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashEvent {
    pub rollup: RollupId,
    pub txid: TxId,
    pub claimed: ClaimKind,
    pub watcher: u32,
    pub amount: u64,
    pub staked_after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimRejection {
    /// Evidence is not a misbehavior artifact.
    WrongKind,
    /// The accused never announced executing the transaction.
    NoExecution,
    /// The pool's records do not show the claimed violation.
    NotMisbehavior,
    /// Evidence does not verify against the recomputed statement.
    EvidenceMismatch,
    /// The same violation was already punished.
    Duplicate,
    UnknownRollup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportOutcome {
    Slashed(SlashEvent),
    ClaimRejected(ClaimRejection),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnforcementError {
    #[error("stake amount must be positive")]
    ZeroAmount,
    #[error("stake overflow for {0}")]
    Overflow(RollupId),
}

/// Pool status as the single byte bound into misbehavior statements.
fn status_code(status: Option<Status>) -> u8 {
    match status {
        None => 0,
        Some(Status::Pending) => 1,
        Some(Status::Timestamped) => 2,
        Some(Status::Buffered) => 3,
        Some(Status::Committed) => 4,
        Some(Status::Rejected(_)) => 5,
    }
}

/// The public statement a misbehavior artifact must be bound to.
pub fn misbehavior_statement(
    claimed: ClaimKind,
    accused: RollupId,
    txid: TxId,
    execution_digest: &Digest,
    pool_status: Option<Status>,
    skipped: Option<TxId>,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.push(ProofKind::Misbehavior as u8);
    out.push(claimed.code());
    out.extend_from_slice(&accused.0.to_be_bytes());
    out.extend_from_slice(&txid.rollup.0.to_be_bytes());
    out.extend_from_slice(&txid.seq.to_be_bytes());
    out.extend_from_slice(execution_digest);
    out.push(status_code(pool_status));
    let skipped = skipped.unwrap_or(TxId::new(0, 0));
    out.extend_from_slice(&skipped.rollup.0.to_be_bytes());
    out.extend_from_slice(&skipped.seq.to_be_bytes());
    out
}

/// First declared dependency of `txid` that the execution did not include.
fn skipped_dependency(pool: &PoolState, exec: &ExecutionClaim) -> Option<TxId> {
    let rec = pool.get_record(&exec.txid)?;
    rec.tx.deps.iter().find(|d| !exec.executed_deps.contains(d)).copied()
}

fn violates(claimed: ClaimKind, pool: &PoolState, exec: &ExecutionClaim) -> bool {
    let status = pool.get_record(&exec.txid).map(|r| r.status);
    match claimed {
        ClaimKind::ExecutedRejected => matches!(status, Some(Status::Rejected(_))),
        ClaimKind::ExecutedWithoutValidation => status != Some(Status::Committed),
        ClaimKind::SkippedDependency => skipped_dependency(pool, exec).is_some(),
    }
}

/// Builds a misbehavior claim from what a watcher saw.
///
/// `observed` is the execution announcement the watcher is pointing at; a
/// watcher with nothing to point at still produces a claim, bound to an
/// all-zero execution digest, which adjudication will refuse.
pub fn build_claim(
    watcher: u32,
    accused: RollupId,
    txid: TxId,
    claimed: ClaimKind,
    observed: Option<&ExecutionClaim>,
    pool: &PoolState,
) -> MisbehaviorClaim {
    let exec_digest = observed.map(ExecutionClaim::digest).unwrap_or([0; 32]);
    let skipped = match (claimed, observed) {
        (ClaimKind::SkippedDependency, Some(exec)) => skipped_dependency(pool, exec),
        _ => None,
    };
    let status = pool.get_record(&txid).map(|r| r.status);
    let statement = misbehavior_statement(claimed, accused, txid, &exec_digest, status, skipped);
    MisbehaviorClaim {
        accused,
        txid,
        claimed,
        evidence: proofs::prove(ProofKind::Misbehavior, &statement, &watcher.to_be_bytes()),
        watcher,
    }
}

/// Collateral accounts plus the log of execution announcements.
#[derive(Debug, Clone, Default)]
pub struct StakeLedger {
    accounts: BTreeMap<RollupId, StakeAccount>,
    deposited: BTreeMap<RollupId, u64>,
    executions: BTreeMap<(RollupId, TxId), ExecutionClaim>,
    punished: BTreeSet<(RollupId, TxId, ClaimKind)>,
}

impl StakeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stake(&mut self, rollup: RollupId, amount: u64) -> Result<StakeAccount, EnforcementError> {
        if amount == 0 {
            return Err(EnforcementError::ZeroAmount);
        }
        let acct = self.accounts.entry(rollup).or_insert(StakeAccount { rollup, staked: 0, slashed_total: 0 });
        acct.staked = acct.staked.checked_add(amount).ok_or(EnforcementError::Overflow(rollup))?;
        *self.deposited.entry(rollup).or_default() += amount;
        Ok(*acct)
    }

    pub fn account(&self, rollup: RollupId) -> Option<&StakeAccount> {
        self.accounts.get(&rollup)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &StakeAccount> {
        self.accounts.values()
    }

    pub fn staked(&self, rollup: RollupId) -> u64 {
        self.accounts.get(&rollup).map_or(0, |a| a.staked)
    }

    pub fn deposited(&self, rollup: RollupId) -> u64 {
        self.deposited.get(&rollup).copied().unwrap_or(0)
    }

    /// Publishing requires `staked >= min_stake`.
    pub fn can_publish(&self, rollup: RollupId, min_stake: u64) -> bool {
        self.staked(rollup) >= min_stake
    }

    /// Records a rollup's execution announcement. A later announcement for
    /// the same `(rollup, txid)` replaces the earlier one.
    pub fn record_execution(&mut self, claim: ExecutionClaim) {
        self.executions.insert((claim.rollup, claim.txid), claim);
    }

    pub fn execution(&self, rollup: RollupId, txid: TxId) -> Option<&ExecutionClaim> {
        self.executions.get(&(rollup, txid))
    }

    /// Adjudicates `claim` against the pool's records and slashes on success.
    pub fn report(&mut self, claim: &MisbehaviorClaim, pool: &PoolState, fraction: Fraction) -> ReportOutcome {
        use ReportOutcome::ClaimRejected as Rej;
        if claim.evidence.kind != ProofKind::Misbehavior {
            return Rej(ClaimRejection::WrongKind);
        }
        if !self.accounts.contains_key(&claim.accused) {
            return Rej(ClaimRejection::UnknownRollup);
        }
        let Some(exec) = self.executions.get(&(claim.accused, claim.txid)) else {
            return Rej(ClaimRejection::NoExecution);
        };
        let skipped = match claim.claimed {
            ClaimKind::SkippedDependency => skipped_dependency(pool, exec),
            _ => None,
        };
        let statement = misbehavior_statement(
            claim.claimed,
            claim.accused,
            claim.txid,
            &exec.digest(),
            pool.get_record(&claim.txid).map(|r| r.status),
            skipped,
        );
        if !proofs::verify_proof(&claim.evidence, &statement) {
            return Rej(ClaimRejection::EvidenceMismatch);
        }
        if !violates(claim.claimed, pool, exec) {
            return Rej(ClaimRejection::NotMisbehavior);
        }
        if !self.punished.insert((claim.accused, claim.txid, claim.claimed)) {
            return Rej(ClaimRejection::Duplicate);
        }
        let acct = self.accounts.get_mut(&claim.accused).unwrap();
        let amount = fraction.apply_floor(acct.staked);
        acct.staked -= amount;
        acct.slashed_total += amount;
        ReportOutcome::Slashed(SlashEvent {
            rollup: claim.accused,
            txid: claim.txid,
            claimed: claim.claimed,
            watcher: claim.watcher,
            amount,
            staked_after: acct.staked,
        })
    }
}
