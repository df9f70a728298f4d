//! Atomic composability across rollups: a quorum-timestamped common pool,
//! a bounded dependency buffer, mock proofs, stake enforcement, and a
//! deterministic discrete-event simulator that drives them.

pub mod enforcement;
pub mod model;
pub mod pool;
pub mod proofs;
pub mod scheduler;
pub mod sim;

pub use enforcement::{
    ClaimKind, ExecutionClaim, MisbehaviorClaim, ReportOutcome, SlashEvent, StakeAccount, StakeLedger,
};
pub use model::{
    dependency_closure, AuthToken, Closure, Digest, Fraction, ProtocolConfig, RejectReason, RollupId, Status, Tick,
    Transaction, TxId,
};
pub use pool::{PoolRecord, PoolState};
pub use proofs::{ProofArtifact, ProofKind};
pub use scheduler::{compatible, AdmitOutcome, BufferEntry, Notification, SchedulerState};
