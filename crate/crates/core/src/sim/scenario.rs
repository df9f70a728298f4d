//! Scenario files: protocol parameters, rollups, network model and a
//! tick-ordered script of events. The on-disk format is TOML; see
//! `docs/scenario-format.md` at the repository root.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enforcement::ClaimKind;
use crate::model::{from_hex, to_hex, Digest, ProtocolConfig, Tick, Transaction, TxId};
use crate::proofs;
use crate::sim::rng::DelayModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rollups {
    pub count: u32,
    /// Initial stake per rollup; missing entries stake nothing.
    #[serde(default)]
    pub stakes: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSetup {
    #[serde(default)]
    pub clock_skews: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedEvent {
    PublishTx {
        tick: Tick,
        tx: TxId,
        #[serde(default)]
        deps: Vec<TxId>,
        /// Hex payload digest; derived from the id when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payload: Option<String>,
        /// Defaults to the rollup index.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key_id: Option<u64>,
        /// Publish with a corrupted auth tag.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        forged: bool,
    },
    NodeFailAt {
        tick: Tick,
        node: u32,
    },
    /// A rollup announces it executed `tx`.
    RogueExecutionClaim {
        tick: Tick,
        rollup: u32,
        tx: TxId,
        /// Dependencies the rollup says it executed first; defaults to the
        /// transaction's declared dependencies.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        executed_deps: Option<Vec<TxId>>,
    },
    /// A watcher files a misbehavior claim against `accused` about `tx`.
    WatcherObserve {
        tick: Tick,
        watcher: u32,
        accused: u32,
        tx: TxId,
        claim: ClaimKind,
    },
    EndAt {
        tick: Tick,
    },
}

impl ScriptedEvent {
    pub fn tick(&self) -> Tick {
        match self {
            ScriptedEvent::PublishTx { tick, .. }
            | ScriptedEvent::NodeFailAt { tick, .. }
            | ScriptedEvent::RogueExecutionClaim { tick, .. }
            | ScriptedEvent::WatcherObserve { tick, .. }
            | ScriptedEvent::EndAt { tick } => *tick,
        }
    }
}

fn default_sweep_interval() -> Tick {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sweep_interval")]
    pub sweep_interval: Tick,
    pub config: ProtocolConfig,
    pub rollups: Rollups,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub pool: PoolSetup,
    pub events: Vec<ScriptedEvent>,
}

/// Payload digest used when a scenario does not give one.
pub fn default_payload(tx: TxId) -> Digest {
    proofs::sha256(&[b"dcp/payload/v1", &tx.rollup.0.to_be_bytes(), &tx.seq.to_be_bytes()])
}

impl Scenario {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn end_at(&self) -> Tick {
        self.events.last().map_or(0, ScriptedEvent::tick)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate().map_err(|e| invalid(e.to_string()))?;
        let n = self.config.node_count;
        let rollups = self.rollups.count;
        if rollups == 0 {
            return Err(invalid("rollups.count must be at least 1"));
        }
        if self.rollups.stakes.len() > rollups as usize {
            return Err(invalid("rollups.stakes has more entries than rollups.count"));
        }
        if self.sweep_interval == 0 {
            return Err(invalid("sweep_interval must be at least 1"));
        }
        if self.pool.clock_skews.len() > n as usize {
            return Err(invalid("pool.clock_skews has more entries than config.node_count"));
        }
        match &self.delay {
            DelayModel::Uniform { lo, hi } if lo > hi => return Err(invalid("delay: lo must not exceed hi")),
            DelayModel::PerEdge { table }
                if table.len() != rollups as usize || table.iter().any(|row| row.len() != n as usize) =>
            {
                return Err(invalid("delay.table must be rollups.count rows of node_count entries"));
            }
            _ => {}
        }

        let Some(ScriptedEvent::EndAt { .. }) = self.events.last() else {
            return Err(invalid("the last event must be end_at"));
        };
        let mut prev = 0;
        let mut ids = BTreeSet::new();
        for (i, ev) in self.events.iter().enumerate() {
            let at = |msg: String| invalid(format!("events[{i}]: {msg}"));
            if ev.tick() < prev {
                return Err(at(format!("tick {} is earlier than the previous event's tick {prev}", ev.tick())));
            }
            prev = ev.tick();
            let check_rollup = |r: u32| {
                if r >= rollups {
                    Err(at(format!("rollup {r} out of range (count {rollups})")))
                } else {
                    Ok(())
                }
            };
            match ev {
                ScriptedEvent::PublishTx { tx, deps, payload, .. } => {
                    check_rollup(tx.rollup.0)?;
                    if !ids.insert(*tx) {
                        return Err(at(format!("duplicate transaction id {tx}")));
                    }
                    if deps.contains(tx) {
                        return Err(at(format!("{tx} depends on itself")));
                    }
                    for d in deps {
                        check_rollup(d.rollup.0)?;
                    }
                    if let Some(p) = payload {
                        if from_hex(p).is_none() {
                            return Err(at("payload must be 64 hex digits".into()));
                        }
                    }
                }
                ScriptedEvent::NodeFailAt { node, .. } => {
                    if *node >= n {
                        return Err(at(format!("node {node} out of range (node_count {n})")));
                    }
                }
                ScriptedEvent::RogueExecutionClaim { rollup, .. } => check_rollup(*rollup)?,
                ScriptedEvent::WatcherObserve { accused, .. } => check_rollup(*accused)?,
                ScriptedEvent::EndAt { .. } => {
                    if i + 1 != self.events.len() {
                        return Err(at("end_at must appear exactly once, as the last event".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Materializes the transaction a `publish_tx` event describes.
    pub fn transaction(ev: &ScriptedEvent) -> Option<Transaction> {
        let ScriptedEvent::PublishTx { tick, tx, deps, payload, key_id, forged } = ev else {
            return None;
        };
        let payload = payload.as_deref().and_then(from_hex).unwrap_or_else(|| default_payload(*tx));
        let mut t =
            Transaction::new(*tx, deps.iter().copied(), payload, key_id.unwrap_or(u64::from(tx.rollup.0)), *tick)
                .expect("validated: no self-dependency");
        if *forged {
            t.auth_token.tag[0] ^= 0x01;
        }
        Some(t)
    }
}

/// Formats a digest the way scenario files expect it.
pub fn payload_hex(d: &Digest) -> String {
    to_hex(d)
}
