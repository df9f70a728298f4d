//! Benchmark fixtures.

use std::collections::BTreeMap;

use dcp_core::sim::generate::{generate, GenOptions};
use dcp_core::sim::Scenario;
use dcp_core::{Transaction, TxId};

/// Random scenario with up to `max_tx` transactions, fast path as given.
pub fn scenario(seed: u64, max_tx: usize, fast_path: bool) -> Scenario {
    generate(seed, &GenOptions { max_tx, fast_path: Some(fast_path), ..GenOptions::default() })
}

/// `len` transactions where each depends on the previous one and, every
/// `fan` steps, on the one `fan` back as well. The last id is the root.
pub fn chain(len: u64, fan: u64) -> (BTreeMap<TxId, Transaction>, TxId) {
    let mut known = BTreeMap::new();
    for i in 0..len {
        let id = TxId::new((i % 4) as u32, i);
        let mut deps = Vec::new();
        if i > 0 {
            deps.push(TxId::new(((i - 1) % 4) as u32, i - 1));
        }
        if fan > 1 && i >= fan && i % fan == 0 {
            deps.push(TxId::new(((i - fan) % 4) as u32, i - fan));
        }
        let tx = Transaction::new(id, deps, [0; 32], 0, 0).expect("no self-dependency");
        known.insert(id, tx);
    }
    (known, TxId::new(((len - 1) % 4) as u32, len - 1))
}
