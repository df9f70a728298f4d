//! Shared domain vocabulary: identifiers, transactions, protocol
//! configuration, lifecycle statuses and rejection reasons.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Simulation time, in ticks of the simulated clock.
pub type Tick = u64;

/// Opaque 32-byte digest.
pub type Digest = [u8; 32];

/// Index of a rollup in the configured rollup set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RollupId(pub u32);

impl fmt::Display for RollupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

/// The `seq`-th transaction originated by `rollup`.
///
/// Ordering is `(rollup, seq)`, which is the canonical member order used by
/// buffers, traces and proof statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId {
    pub rollup: RollupId,
    pub seq: u64,
}

impl TxId {
    pub const fn new(rollup: u32, seq: u64) -> Self {
        Self { rollup: RollupId(rollup), seq }
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.rollup.0, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed transaction id `{0}` (expected `<rollup>:<seq>`)")]
pub struct ParseTxIdError(String);

impl FromStr for TxId {
    type Err = ParseTxIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTxIdError(s.to_owned());
        let (rollup, seq) = s.split_once(':').ok_or_else(err)?;
        Ok(TxId::new(rollup.trim().parse().map_err(|_| err())?, seq.trim().parse().map_err(|_| err())?))
    }
}

impl Serialize for TxId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Keyed authenticity digest over `(key_id, id, payload_digest)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthToken {
    pub key_id: u64,
    #[serde(with = "hex_digest")]
    pub tag: Digest,
}

/// A rollup-originated unit of work with declared cross-rollup dependencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub deps: BTreeSet<TxId>,
    #[serde(with = "hex_digest")]
    pub payload_digest: Digest,
    pub auth_token: AuthToken,
    pub submit_time: Tick,
}

impl Transaction {
    /// Builds a transaction with an honestly produced auth token.
    pub fn new(
        id: TxId,
        deps: impl IntoIterator<Item = TxId>,
        payload_digest: Digest,
        key_id: u64,
        submit_time: Tick,
    ) -> Result<Self, ModelError> {
        let deps: BTreeSet<TxId> = deps.into_iter().collect();
        if deps.contains(&id) {
            return Err(ModelError::SelfDependency(id));
        }
        let tag = crate::proofs::auth_tag(key_id, id, &payload_digest);
        Ok(Self { id, deps, payload_digest, auth_token: AuthToken { key_id, tag }, submit_time })
    }
}

/// Exact rational in `[0, 1]`, written `"n/d"` in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    numer: u64,
    denom: u64,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { numer: 0, denom: 1 };
    pub const ONE: Fraction = Fraction { numer: 1, denom: 1 };

    pub fn new(numer: u64, denom: u64) -> Result<Self, ModelError> {
        if denom == 0 || numer > denom {
            return Err(ModelError::BadFraction(format!("{numer}/{denom}")));
        }
        Ok(Self { numer, denom })
    }

    pub fn numer(&self) -> u64 {
        self.numer
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    /// `floor(self × amount)`, computed without overflow.
    pub fn apply_floor(&self, amount: u64) -> u64 {
        ((amount as u128 * self.numer as u128) / self.denom as u128) as u64
    }
}

impl Default for Fraction {
    fn default() -> Self {
        Fraction::ONE
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl FromStr for Fraction {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadFraction(s.to_owned());
        match s.split_once('/') {
            Some((n, d)) => Fraction::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => Fraction::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(n) => Fraction::new(n, 1),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Protocol parameters shared by the pool, scheduler and enforcement layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Number of pool nodes `n`.
    pub node_count: u32,
    /// Receipts needed to timestamp a transaction, `n/2 < q <= n`.
    pub quorum: u32,
    /// Maximum pairwise timestamp gap inside a commit group.
    pub delta: Tick,
    /// Maximum age `now - τ` a buffered transaction may reach.
    pub tau_max: Tick,
    /// Buffer capacity.
    pub buffer_max: usize,
    /// Maximum number of failed resolution attempts.
    pub deps_max: u32,
    #[serde(default)]
    pub min_stake: u64,
    #[serde(default)]
    pub slash_fraction: Fraction,
    #[serde(default)]
    pub fast_path: bool,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.node_count == 0 {
            return Err(ModelError::InvalidConfig("node_count >= 1"));
        }
        // q > n/2 without rounding: 2q > n
        if 2 * u64::from(self.quorum) <= u64::from(self.node_count) {
            return Err(ModelError::InvalidConfig("quorum > node_count / 2 (majority)"));
        }
        if self.quorum > self.node_count {
            return Err(ModelError::InvalidConfig("quorum <= node_count"));
        }
        if self.tau_max == 0 {
            return Err(ModelError::InvalidConfig("tau_max > 0"));
        }
        if self.buffer_max == 0 {
            return Err(ModelError::InvalidConfig("buffer_max >= 1"));
        }
        if self.deps_max == 0 {
            return Err(ModelError::InvalidConfig("deps_max >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    TimedOut,
    BufferEvicted,
    AttemptsExhausted,
    AuthFailed,
    DependencyRejected,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::TimedOut,
        RejectReason::BufferEvicted,
        RejectReason::AttemptsExhausted,
        RejectReason::AuthFailed,
        RejectReason::DependencyRejected,
    ];
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Lifecycle of a transaction inside the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pending,
    Timestamped,
    Buffered,
    Committed,
    Rejected(RejectReason),
}

impl Status {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Status::Committed | Status::Rejected(_))
    }

    /// Legal-transition relation of the lifecycle.
    pub fn can_transition_to(&self, next: Status) -> bool {
        use Status::*;
        matches!(
            (self, next),
            (Pending, Timestamped)
                | (Timestamped, Committed | Buffered | Rejected(_))
                | (Buffered, Committed | Rejected(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transaction {0} depends on itself")]
    SelfDependency(TxId),
    #[error("invalid fraction `{0}` (expected n/d with 0 <= n <= d, d > 0)")]
    BadFraction(String),
    #[error("invalid protocol config: requires {0}")]
    InvalidConfig(&'static str),
}

/// Result of a dependency-closure walk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Closure {
    /// Smallest dependency-closed set of known transactions containing the root.
    pub members: BTreeSet<TxId>,
    /// Dependencies referenced by members but absent from the known set.
    pub unresolved: BTreeSet<TxId>,
}

/// Transitive dependency closure of `root` over `known`.
///
/// Dependencies missing from `known` are not errors; they are reported in
/// [`Closure::unresolved`].
pub fn dependency_closure(root: TxId, known: &BTreeMap<TxId, Transaction>) -> Closure {
    closure_with(root, |id| known.get(id).map(|tx| &tx.deps))
}

/// Closure walk over an arbitrary dependency lookup. `lookup` returns `None`
/// for transactions that are not known.
pub fn closure_with<'a, F>(root: TxId, lookup: F) -> Closure
where
    F: Fn(&TxId) -> Option<&'a BTreeSet<TxId>>,
{
    let mut out = Closure::default();
    if lookup(&root).is_none() {
        out.unresolved.insert(root);
        return out;
    }
    let mut queue = VecDeque::from([root]);
    out.members.insert(root);
    while let Some(id) = queue.pop_front() {
        let Some(deps) = lookup(&id) else { continue };
        for dep in deps {
            if lookup(dep).is_some() {
                if out.members.insert(*dep) {
                    queue.push_back(*dep);
                }
            } else {
                out.unresolved.insert(*dep);
            }
        }
    }
    out
}

pub(crate) mod hex_digest {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Digest;

    pub fn serialize<S: Serializer>(d: &Digest, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Digest, D::Error> {
        let s = String::deserialize(d)?;
        super::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    use fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn from_hex(s: &str) -> Option<Digest> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}
