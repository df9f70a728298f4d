//! Seeded network delays.
//!
//! Each random draw gets its own ChaCha8 stream whose 32-byte key is
//! `SHA-256("dcp/rng/v1" ‖ seed (u64 BE) ‖ purpose ‖ node (u32 BE) ‖ tx rollup (u32 BE) ‖ tx seq (u64 BE))`.
//! Draws therefore do not depend on the order in which they are made.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Tick, TxId};
use crate::proofs::sha256;

pub const PURPOSE_DELAY: &[u8] = b"delay";

/// Independent stream for one `(purpose, node, tx)` draw.
pub fn stream(seed: u64, purpose: &[u8], node: u32, tx: TxId) -> ChaCha8Rng {
    let key = sha256(&[
        b"dcp/rng/v1",
        &seed.to_be_bytes(),
        purpose,
        &node.to_be_bytes(),
        &tx.rollup.0.to_be_bytes(),
        &tx.seq.to_be_bytes(),
    ]);
    ChaCha8Rng::from_seed(key)
}

/// Delay from a publishing rollup to a pool node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Fixed {
        ticks: Tick,
    },
    /// Uniform over `lo..=hi`.
    Uniform {
        lo: Tick,
        hi: Tick,
    },
    /// `table[rollup][node]`.
    PerEdge {
        table: Vec<Vec<Tick>>,
    },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Fixed { ticks: 0 }
    }
}

impl DelayModel {
    pub fn delay(&self, seed: u64, tx: TxId, node: u32) -> Tick {
        match self {
            DelayModel::Fixed { ticks } => *ticks,
            DelayModel::Uniform { lo, hi } => stream(seed, PURPOSE_DELAY, node, tx).gen_range(*lo..=*hi),
            DelayModel::PerEdge { table } => table[tx.rollup.0 as usize][node as usize],
        }
    }

    pub fn max_delay(&self) -> Tick {
        match self {
            DelayModel::Fixed { ticks } => *ticks,
            DelayModel::Uniform { hi, .. } => *hi,
            DelayModel::PerEdge { table } => table.iter().flatten().copied().max().unwrap_or(0),
        }
    }
}
