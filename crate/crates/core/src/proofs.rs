//! Authenticity checks and the mock proof layer.
//!
//! Every digest in this crate is SHA-256. Artifacts are digest-bound mocks:
//! a verifier checks that an artifact's statement digest matches the public
//! statement it is handed and that the artifact's seal is internally
//! consistent. Verification never sees a witness.
//!
//! Dependency-resolution statements are encoded bit-exactly as
//!
//! ```text
//! kind (1 byte) ‖ count (u32 BE) ‖ { rollup (u32 BE) ‖ seq (u64 BE) ‖ τ (u64 BE) }*
//! ```
//!
//! with members in ascending [`TxId`] order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::{hex_digest, Digest, Tick, Transaction, TxId};
use crate::pool::PoolState;
use crate::scheduler::compatible;

const AUTH_DOMAIN: &[u8] = b"dcp/auth/v1";
const WITNESS_DOMAIN: &[u8] = b"dcp/witness/v1";
const SEAL_DOMAIN: &[u8] = b"dcp/seal/v1";

/// Serialized artifact length: kind byte plus three digests.
pub const ARTIFACT_LEN: usize = 1 + 32 * 3;

pub(crate) fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Keyed digest binding `key_id` to the transaction id and payload.
pub fn auth_tag(key_id: u64, id: TxId, payload_digest: &Digest) -> Digest {
    sha256(&[AUTH_DOMAIN, &key_id.to_be_bytes(), &id.rollup.0.to_be_bytes(), &id.seq.to_be_bytes(), payload_digest])
}

pub fn verify_auth(tx: &Transaction) -> bool {
    auth_tag(tx.auth_token.key_id, tx.id, &tx.payload_digest) == tx.auth_token.tag
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ProofKind {
    Auth = 0,
    DependencyResolution = 1,
    Misbehavior = 2,
}

impl ProofKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ProofKind::Auth),
            1 => Some(ProofKind::DependencyResolution),
            2 => Some(ProofKind::Misbehavior),
            _ => None,
        }
    }
}

/// Constant-size verifiable claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofArtifact {
    pub kind: ProofKind,
    #[serde(with = "hex_digest")]
    pub statement_digest: Digest,
    #[serde(with = "hex_digest")]
    pub witness_commitment: Digest,
    #[serde(with = "hex_digest")]
    pub seal: Digest,
}

impl ProofArtifact {
    pub fn to_bytes(&self) -> [u8; ARTIFACT_LEN] {
        let mut out = [0u8; ARTIFACT_LEN];
        out[0] = self.kind as u8;
        out[1..33].copy_from_slice(&self.statement_digest);
        out[33..65].copy_from_slice(&self.witness_commitment);
        out[65..97].copy_from_slice(&self.seal);
        out
    }

    pub fn from_bytes(bytes: &[u8; ARTIFACT_LEN]) -> Option<Self> {
        let digest = |r: std::ops::Range<usize>| -> Digest { bytes[r].try_into().unwrap() };
        Some(Self {
            kind: ProofKind::from_byte(bytes[0])?,
            statement_digest: digest(1..33),
            witness_commitment: digest(33..65),
            seal: digest(65..97),
        })
    }
}

fn seal(kind: ProofKind, statement_digest: &Digest, witness_commitment: &Digest) -> Digest {
    sha256(&[SEAL_DOMAIN, &[kind as u8], statement_digest, witness_commitment])
}

/// Mock prover: binds `statement` and commits to `witness`.
pub fn prove(kind: ProofKind, statement: &[u8], witness: &[u8]) -> ProofArtifact {
    let statement_digest = sha256(&[statement]);
    let witness_commitment = sha256(&[WITNESS_DOMAIN, witness]);
    ProofArtifact {
        kind,
        statement_digest,
        witness_commitment,
        seal: seal(kind, &statement_digest, &witness_commitment),
    }
}

/// Accepts iff the artifact was built for exactly `statement`.
///
/// Only the artifact and the public statement are inputs; witnesses and
/// transaction payloads are not reachable from here.
pub fn verify_proof(artifact: &ProofArtifact, statement: &[u8]) -> bool {
    statement.first() == Some(&(artifact.kind as u8))
        && sha256(&[statement]) == artifact.statement_digest
        && seal(artifact.kind, &artifact.statement_digest, &artifact.witness_commitment) == artifact.seal
}

/// Bit-exact dependency-resolution statement over `(id, τ)` pairs.
pub fn dependency_statement(members: &[(TxId, Tick)]) -> Vec<u8> {
    let mut sorted = members.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    let mut out = Vec::with_capacity(5 + 20 * sorted.len());
    out.push(ProofKind::DependencyResolution as u8);
    out.extend_from_slice(&(sorted.len() as u32).to_be_bytes());
    for (id, tau) in sorted {
        out.extend_from_slice(&id.rollup.0.to_be_bytes());
        out.extend_from_slice(&id.seq.to_be_bytes());
        out.extend_from_slice(&tau.to_be_bytes());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("group member {0} is unknown to the pool")]
    UnknownMember(TxId),
    #[error("group member {0} has no canonical timestamp")]
    IncompleteGroup(TxId),
    #[error("members {0} and {1} are not delta-compatible")]
    Incompatible(TxId, TxId),
    #[error("empty group")]
    EmptyGroup,
}

/// Collects `(id, τ)` for every group member from the pool's records.
pub fn group_timestamps(group: &BTreeSet<TxId>, pool: &PoolState) -> Result<Vec<(TxId, Tick)>, ProofError> {
    group
        .iter()
        .map(|id| {
            let rec = pool.get_record(id).ok_or(ProofError::UnknownMember(*id))?;
            rec.tau.map(|t| (*id, t)).ok_or(ProofError::IncompleteGroup(*id))
        })
        .collect()
}

/// Builds a dependency-resolution artifact for a timestamped,
/// pairwise delta-compatible group.
pub fn make_dependency_proof(
    group: &BTreeSet<TxId>,
    pool: &PoolState,
    delta: Tick,
) -> Result<ProofArtifact, ProofError> {
    if group.is_empty() {
        return Err(ProofError::EmptyGroup);
    }
    let members = group_timestamps(group, pool)?;
    let lo = members.iter().min_by_key(|m| m.1).unwrap();
    let hi = members.iter().max_by_key(|m| m.1).unwrap();
    if !compatible(lo.1, hi.1, delta) {
        return Err(ProofError::Incompatible(lo.0, hi.0));
    }
    let statement = dependency_statement(&members);
    // Witness: the member payloads, which never leave the prover.
    let mut witness = Vec::with_capacity(32 * members.len());
    for (id, _) in &members {
        witness.extend_from_slice(&pool.get_record(id).unwrap().tx.payload_digest);
    }
    Ok(prove(ProofKind::DependencyResolution, &statement, &witness))
}
