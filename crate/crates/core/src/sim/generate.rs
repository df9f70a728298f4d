//! Seeded random scenarios for property and acceptance testing.
//!
//! Scenarios mix forward and backward references, cycles, dependencies on
//! transactions that are never published, forged tags, node failures,
//! execution claims and watcher reports. The same seed and options always
//! give the same scenario.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enforcement::ClaimKind;
use crate::model::{Fraction, ProtocolConfig, Tick, TxId};
use crate::sim::rng::DelayModel;
use crate::sim::scenario::{PoolSetup, Rollups, Scenario, ScriptedEvent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenOptions {
    pub max_tx: usize,
    pub max_nodes: u32,
    pub max_rollups: u32,
    /// Forged tags, node failures, execution claims and watcher reports.
    pub adversarial: bool,
    /// `None` picks at random.
    pub fast_path: Option<bool>,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { max_tx: 12, max_nodes: 7, max_rollups: 4, adversarial: true, fast_path: None }
    }
}

pub fn generate(seed: u64, opts: &GenOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=opts.max_nodes.max(1));
    let quorum = rng.gen_range(n / 2 + 1..=n);
    let rollups = rng.gen_range(1..=opts.max_rollups.max(1));
    let min_stake = if rng.gen_bool(0.3) { 50 } else { 0 };
    let denom = rng.gen_range(1..=4);
    let config = ProtocolConfig {
        node_count: n,
        quorum,
        delta: rng.gen_range(0..=6),
        tau_max: rng.gen_range(1..=12),
        buffer_max: rng.gen_range(1..=6),
        deps_max: rng.gen_range(1..=5),
        min_stake,
        slash_fraction: Fraction::new(rng.gen_range(0..=denom), denom).expect("denom > 0"),
        fast_path: opts.fast_path.unwrap_or_else(|| rng.gen_bool(0.5)),
    };
    let stakes = (0..rollups).map(|_| if rng.gen_bool(0.85) { rng.gen_range(50..=200) } else { 0 }).collect();
    let delay = match rng.gen_range(0..3) {
        0 => DelayModel::Fixed { ticks: rng.gen_range(0..=3) },
        1 => {
            let lo = rng.gen_range(0..=2);
            DelayModel::Uniform { lo, hi: lo + rng.gen_range(0..=4) }
        }
        _ => DelayModel::PerEdge {
            table: (0..rollups).map(|_| (0..n).map(|_| rng.gen_range(0..=5)).collect()).collect(),
        },
    };
    let clock_skews = if rng.gen_bool(0.4) { (0..n).map(|_| rng.gen_range(-2..=3)).collect() } else { Vec::new() };

    let count = rng.gen_range(1..=opts.max_tx.max(1));
    let mut next_seq = vec![0u64; rollups as usize];
    let ids: Vec<TxId> = (0..count)
        .map(|_| {
            let r = rng.gen_range(0..rollups);
            let id = TxId::new(r, next_seq[r as usize]);
            next_seq[r as usize] += 1;
            id
        })
        .collect();

    let mut events = Vec::new();
    let mut tick: Tick = 0;
    for (i, id) in ids.iter().enumerate() {
        if rng.gen_bool(0.6) {
            tick += rng.gen_range(0..=3);
        }
        if opts.adversarial && n > 1 && rng.gen_bool(0.05) {
            events.push(ScriptedEvent::NodeFailAt { tick, node: rng.gen_range(0..n) });
        }
        let mut deps: Vec<TxId> = Vec::new();
        for _ in 0..rng.gen_range(0..=3) {
            let roll = rng.gen_range(0..100);
            let dep = if roll < 8 {
                // never published
                let r = rng.gen_range(0..rollups);
                TxId::new(r, 1000 + rng.gen_range(0..10))
            } else if roll < 75 && i > 0 {
                ids[rng.gen_range(0..i)]
            } else {
                ids[rng.gen_range(0..count)]
            };
            if dep != *id && !deps.contains(&dep) {
                deps.push(dep);
            }
        }
        events.push(ScriptedEvent::PublishTx {
            tick,
            tx: *id,
            deps,
            payload: None,
            key_id: None,
            forged: opts.adversarial && rng.gen_bool(0.07),
        });
    }

    if opts.adversarial {
        for _ in 0..rng.gen_range(0..=3) {
            tick += rng.gen_range(0..=4);
            let tx = *ids.choose(&mut rng).expect("at least one tx");
            let rollup = rng.gen_range(0..rollups);
            let executed_deps = rng.gen_bool(0.3).then(Vec::new);
            events.push(ScriptedEvent::RogueExecutionClaim { tick, rollup, tx, executed_deps });
            for _ in 0..rng.gen_range(0..=2) {
                let claim =
                    *[ClaimKind::ExecutedRejected, ClaimKind::ExecutedWithoutValidation, ClaimKind::SkippedDependency]
                        .choose(&mut rng)
                        .unwrap();
                let accused = if rng.gen_bool(0.8) { rollup } else { rng.gen_range(0..rollups) };
                tick += rng.gen_range(0..=2);
                events.push(ScriptedEvent::WatcherObserve { tick, watcher: rng.gen_range(0..4), accused, tx, claim });
            }
        }
    }

    tick += rng.gen_range(0..=30);
    events.push(ScriptedEvent::EndAt { tick });

    let scenario = Scenario {
        name: format!("generated-{seed}"),
        seed,
        sweep_interval: rng.gen_range(1..=3),
        config,
        rollups: Rollups { count: rollups, stakes },
        delay,
        pool: PoolSetup { clock_skews },
        events,
    };
    debug_assert!(scenario.validate().is_ok());
    scenario
}
