use std::collections::BTreeMap;

use dcp_core::sim::generate::{generate, GenOptions};
use dcp_core::sim::metrics::Metrics;
use dcp_core::sim::rng::DelayModel;
use dcp_core::sim::{audit, presets, run, Scenario, Trace, TraceEvent};
use dcp_core::{RejectReason, RollupId, Tick, TxId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const HAPPY: &str = r#"
[config]
node_count = 1
quorum = 1
delta = 0
tau_max = 5
buffer_max = 1
deps_max = 1

[rollups]
count = 1

[[events]]
kind = "publish_tx"
tick = 0
tx = "0:0"

[[events]]
kind = "end_at"
tick = 3
"#;

fn kinds(trace: &Trace) -> Vec<String> {
    trace.iter().map(|r| serde_json::to_value(r).unwrap()["kind"].as_str().unwrap().to_owned()).collect()
}

#[test]
fn happy_path_follows_the_protocol_order() {
    let out = run(&Scenario::from_toml(HAPPY).unwrap());
    let k = kinds(&out.trace);
    let order = ["Published", "Delivered", "TimestampAssigned", "Admitted", "Committed"];
    let pos: Vec<usize> = order.iter().map(|o| k.iter().position(|x| x == o).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{k:?}");
    assert_eq!(k.last().unwrap(), "End");
    assert_eq!(out.metrics.committed, 1);
}

#[test]
fn same_scenario_gives_identical_bytes() {
    for seed in 0..10 {
        let s = generate(seed, &GenOptions::default());
        assert_eq!(run(&s).trace.to_jsonl(), run(&s).trace.to_jsonl());
    }
}

#[test]
fn forged_transaction_is_rejected_and_notified() {
    let text = HAPPY.replace("tx = \"0:0\"", "tx = \"0:0\"\nforged = true");
    let out = run(&Scenario::from_toml(&text).unwrap());
    let rejected: Vec<_> = out
        .trace
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Rejected { tx, reason, .. } => Some((*tx, *reason)),
            _ => None,
        })
        .collect();
    assert_eq!(rejected, vec![(TxId::new(0, 0), RejectReason::AuthFailed)]);
    assert!(out.trace.iter().any(|r| matches!(r.event, TraceEvent::Notified { target: RollupId(0), .. })));
    assert!(!kinds(&out.trace).contains(&"Admitted".to_owned()));
}

#[test]
fn slashed_rollup_cannot_publish_again() {
    let out = run(&presets::get("rogue-rollup").unwrap());
    let slash_tick = out.trace.iter().find(|r| matches!(r.event, TraceEvent::Slashed { .. })).unwrap().tick;
    let refused = out
        .trace
        .iter()
        .find_map(|r| match r.event {
            TraceEvent::PublishRefused { tx, .. } => Some((r.tick, tx)),
            _ => None,
        })
        .unwrap();
    assert!(refused.0 > slash_tick);
    assert_eq!(refused.1.rollup, RollupId(2));
}

/// Delay oracle: rebuilds each draw's stream from the documented key layout.
fn oracle_delay(seed: u64, tx: TxId, node: u32, lo: Tick, hi: Tick) -> Tick {
    let mut h = Sha256::new();
    h.update(b"dcp/rng/v1");
    h.update(seed.to_be_bytes());
    h.update(b"delay");
    h.update(node.to_be_bytes());
    h.update(tx.rollup.0.to_be_bytes());
    h.update(tx.seq.to_be_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key).gen_range(lo..=hi)
}

#[test]
fn delivery_ticks_match_the_seeded_delay_oracle() {
    let mut checked = 0;
    for seed in 0..200 {
        let mut s = generate(seed, &GenOptions::default());
        s.delay = DelayModel::Uniform { lo: 1, hi: 6 };
        let out = run(&s);
        let mut published = BTreeMap::new();
        for r in out.trace.iter() {
            match r.event {
                TraceEvent::Published { tx, .. } => {
                    published.insert(tx, r.tick);
                }
                TraceEvent::Delivered { tx, node, .. } | TraceEvent::DeliveryDropped { tx, node } => {
                    assert_eq!(
                        r.tick,
                        published[&tx] + oracle_delay(s.seed, tx, node, 1, 6),
                        "seed {seed} {tx} node {node}"
                    );
                    checked += 1;
                }
                _ => {}
            }
        }
    }
    assert!(checked > 1000);
}

/// Metrics oracle: an independent fold over the raw trace.
fn fold_metrics(trace: &Trace) -> Metrics {
    let mut published = 0;
    let mut refused = 0;
    let mut committed = 0u64;
    let mut rejected: BTreeMap<RejectReason, u64> = RejectReason::ALL.iter().map(|r| (*r, 0)).collect();
    let mut sweeps = 0u64;
    let (mut occ_sum, mut occ_max) = (0u64, 0usize);
    let (mut lat_sum, mut lat_max) = (0u64, 0);
    let mut slash_total = BTreeMap::new();
    for r in trace.iter() {
        match &r.event {
            TraceEvent::RunStarted { rollups, .. } => {
                slash_total = (0..*rollups).map(|i| (RollupId(i), 0)).collect();
            }
            TraceEvent::Published { .. } => published += 1,
            TraceEvent::PublishRefused { .. } => refused += 1,
            TraceEvent::Committed { tau, .. } => {
                committed += 1;
                let l = r.tick.saturating_sub(*tau);
                lat_sum += l;
                lat_max = lat_max.max(l);
            }
            TraceEvent::Rejected { reason, .. } => *rejected.get_mut(reason).unwrap() += 1,
            TraceEvent::SweepEnd { buffered } => {
                sweeps += 1;
                occ_sum += *buffered as u64;
                occ_max = occ_max.max(*buffered);
            }
            TraceEvent::Slashed { rollup, amount, .. } => *slash_total.get_mut(rollup).unwrap() += amount,
            _ => {}
        }
    }
    let total_rejected: u64 = rejected.values().sum();
    Metrics {
        published,
        refused,
        committed,
        rejected,
        unsettled: published - committed - total_rejected,
        sweeps,
        buffer_occupancy_mean: if sweeps == 0 { 0.0 } else { occ_sum as f64 / sweeps as f64 },
        buffer_occupancy_max: occ_max,
        commit_latency_mean: if committed == 0 { 0.0 } else { lat_sum as f64 / committed as f64 },
        commit_latency_max: lat_max,
        slash_total,
    }
}

#[test]
fn metrics_equal_an_independent_trace_fold() {
    let opts = GenOptions { max_tx: 8, ..GenOptions::default() };
    for seed in 0..300 {
        let out = run(&generate(seed, &opts));
        assert_eq!(out.metrics, fold_metrics(&out.trace), "seed {seed}");
    }
    for name in presets::names() {
        let out = run(&presets::get(name).unwrap());
        assert_eq!(out.metrics, fold_metrics(&out.trace), "{name}");
    }
}

#[test]
fn metrics_round_trip_as_json() {
    let m = run(&presets::get("multi-rollup-mesh").unwrap()).metrics;
    let back: Metrics = serde_json::from_str(&m.to_json()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn traces_round_trip_through_jsonl() {
    for seed in 0..50 {
        let t = run(&generate(seed, &GenOptions::default())).trace;
        let text = t.to_jsonl();
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Pending,
    Timestamped,
    Buffered,
    Terminal,
}

/// Replays per-transaction status events and returns the first illegal step.
fn status_walk(trace: &Trace) -> Result<usize, String> {
    let mut phase: BTreeMap<TxId, Phase> = BTreeMap::new();
    for r in trace.iter() {
        let (tx, to) = match &r.event {
            TraceEvent::Published { tx, .. } => {
                if phase.insert(*tx, Phase::Pending).is_some() {
                    return Err(format!("{tx} published twice"));
                }
                continue;
            }
            TraceEvent::TimestampAssigned { tx, .. } => (*tx, Phase::Timestamped),
            TraceEvent::Buffered { tx, .. } => (*tx, Phase::Buffered),
            TraceEvent::Committed { tx, .. } | TraceEvent::Rejected { tx, .. } => (*tx, Phase::Terminal),
            _ => continue,
        };
        let from = *phase.get(&tx).ok_or(format!("{tx} not published"))?;
        let ok = matches!(
            (from, to),
            (Phase::Pending, Phase::Timestamped)
                | (Phase::Timestamped, Phase::Buffered | Phase::Terminal)
                | (Phase::Buffered, Phase::Terminal)
        );
        if !ok {
            return Err(format!("{tx}: {from:?} -> {to:?}"));
        }
        phase.insert(tx, to);
    }
    Ok(phase.values().filter(|p| **p == Phase::Terminal).count())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn statuses_only_move_forward(seed in any::<u64>(), max_tx in 1usize..24) {
        let out = run(&generate(seed, &GenOptions { max_tx, ..GenOptions::default() }));
        let terminal = status_walk(&out.trace).map_err(TestCaseError::fail)?;
        prop_assert_eq!(terminal as u64, out.metrics.committed + out.metrics.rejected_total());
    }

    #[test]
    fn every_rejection_is_notified_once(seed in any::<u64>()) {
        let out = run(&generate(seed, &GenOptions::default()));
        let mut open = BTreeMap::new();
        for r in out.trace.iter() {
            match &r.event {
                TraceEvent::Rejected { tx, reason, .. } => { open.insert(*tx, (*reason, r.tick)); }
                TraceEvent::Notified { tx, reason, target } => {
                    let (want, at) = open.remove(tx).expect("notification follows a rejection");
                    prop_assert_eq!(want, *reason);
                    prop_assert_eq!(at, r.tick);
                    prop_assert_eq!(*target, tx.rollup);
                }
                _ => {}
            }
        }
        prop_assert!(open.is_empty());
    }

    #[test]
    fn engine_traces_always_audit_clean(seed in any::<u64>(), max_tx in 1usize..40) {
        let out = run(&generate(seed, &GenOptions { max_tx, ..GenOptions::default() }));
        let report = audit(&out.trace);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
    }
}
