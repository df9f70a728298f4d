//! Acceptance gate. Each test checks one criterion and writes a single
//! `criterion N ...: PASS|FAIL` line straight to stderr, so the line shows up
//! even when test output is captured.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use dcp_core::proofs::{self, ARTIFACT_LEN};
use dcp_core::sim::generate::{generate, GenOptions};
use dcp_core::sim::rng::DelayModel;
use dcp_core::sim::scenario::{PoolSetup, Rollups, ScriptedEvent};
use dcp_core::sim::{audit, presets, run, Scenario, Trace, TraceEvent};
use dcp_core::{
    Fraction, PoolState, ProofArtifact, ProofKind, ProtocolConfig, RejectReason, RollupId, StakeLedger, Tick,
    Transaction, TxId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const ATOMICITY_SCENARIOS: u64 = 1000;
const ATOMICITY_BUDGET: Duration = Duration::from_secs(60);
const LIMIT_SCENARIOS: u64 = 400;
const QUORUM_TUPLES: u64 = 1000;
const MAX_NODES: u32 = 9;
const DETERMINISM_SCENARIOS: u64 = 20;
const PROOF_TRIALS: u64 = 1000;
const PROOF_GROUP_SIZES: std::ops::RangeInclusive<usize> = 1..=50;
const FAST_PATH_SCENARIOS: u64 = 200;
const SMALL_SCENARIOS: u64 = 3000;
const SMALL_MAX_TX: usize = 8;

fn verdict(n: u32, name: &str, violations: usize, detail: String) {
    let status = if violations == 0 { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} {name}: {status} ({detail})");
    assert_eq!(violations, 0, "criterion {n} {name}: {detail}");
}

/// What a trace says happened, folded without the library's helpers.
struct Outcome {
    delta: Tick,
    deps: BTreeMap<TxId, Vec<TxId>>,
    tau: BTreeMap<TxId, Tick>,
    committed: BTreeMap<TxId, Tick>,
}

fn outcome(trace: &Trace) -> Outcome {
    let mut o = Outcome { delta: 0, deps: BTreeMap::new(), tau: BTreeMap::new(), committed: BTreeMap::new() };
    for r in trace.iter() {
        match &r.event {
            TraceEvent::RunStarted { config, .. } => o.delta = config.delta,
            TraceEvent::Published { tx, deps, .. } => {
                o.deps.insert(*tx, deps.clone());
            }
            TraceEvent::TimestampAssigned { tx, tau } => {
                o.tau.insert(*tx, *tau);
            }
            TraceEvent::Committed { tx, .. } => {
                o.committed.insert(*tx, r.tick);
            }
            _ => {}
        }
    }
    o
}

/// Dependency closure by iterative DFS over the published dependency lists.
/// The second value is false when some member depends on an unpublished id.
fn closure(deps: &BTreeMap<TxId, Vec<TxId>>, root: TxId) -> (BTreeSet<TxId>, bool) {
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    let mut resolved = true;
    while let Some(t) = stack.pop() {
        let Some(ds) = deps.get(&t) else {
            resolved = false;
            continue;
        };
        for d in ds {
            if seen.insert(*d) {
                stack.push(*d);
            }
        }
    }
    resolved &= seen.iter().all(|t| deps.contains_key(t));
    (seen, resolved)
}

fn mixed_scenario(seed: u64) -> Scenario {
    let max_tx = [4, 8, 16, 32, 64][(seed % 5) as usize];
    generate(seed, &GenOptions { max_tx, max_nodes: MAX_NODES, ..GenOptions::default() })
}

#[test]
fn criterion_1_atomicity() {
    let start = Instant::now();
    let mut violations = 0;
    let mut commits = 0;
    for seed in 0..ATOMICITY_SCENARIOS {
        let trace = run(&mixed_scenario(seed)).trace;
        let o = outcome(&trace);
        // closure-closed after every tick, not just at the end
        let mut done: BTreeSet<TxId> = BTreeSet::new();
        let ticks: BTreeSet<Tick> = o.committed.values().copied().collect();
        for t in ticks {
            done.extend(o.committed.iter().filter(|(_, at)| **at == t).map(|(id, _)| *id));
            for id in &done {
                let (members, resolved) = closure(&o.deps, *id);
                if !resolved || !members.is_subset(&done) {
                    violations += 1;
                }
            }
        }
        commits += o.committed.len();
    }
    let elapsed = start.elapsed();
    if elapsed > ATOMICITY_BUDGET {
        violations += 1;
    }
    verdict(
        1,
        "atomicity",
        violations,
        format!("{ATOMICITY_SCENARIOS} scenarios, {commits} commits, {violations} violations, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_2_delta_rule() {
    let mut violations = 0;
    let mut checked = 0;
    for seed in 0..ATOMICITY_SCENARIOS {
        let o = outcome(&run(&mixed_scenario(seed)).trace);
        for id in o.committed.keys() {
            let (members, _) = closure(&o.deps, *id);
            let taus: Vec<Tick> = members.iter().map(|m| o.tau[m]).collect();
            for a in &taus {
                for b in &taus {
                    checked += 1;
                    if a.abs_diff(*b) > o.delta {
                        violations += 1;
                    }
                }
            }
        }
    }
    verdict(2, "delta rule", violations, format!("{checked} pairs checked, {violations} violations"));
}

/// Many transactions that mostly cannot resolve: they wait on ids that are
/// published late or never, so the buffer fills and timers and counters run.
fn limit_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11_7175);
    let n = rng.gen_range(1..=5);
    let rollups = rng.gen_range(1..=3);
    let count = rng.gen_range(10..=60);
    let mut events = Vec::new();
    let mut tick = 0;
    let mut late = Vec::new();
    for i in 0..count {
        tick += rng.gen_range(0..=2);
        let tx = TxId::new(i % rollups, u64::from(i / rollups));
        let mut deps = Vec::new();
        match rng.gen_range(0..4) {
            0 => deps.push(TxId::new(0, 10_000 + u64::from(i))),
            1 => {
                let d = TxId::new(0, 20_000 + u64::from(i));
                late.push(d);
                deps.push(d);
            }
            2 if i > 0 => deps.push(TxId::new((i - 1) % rollups, u64::from((i - 1) / rollups))),
            _ => {}
        }
        events.push(ScriptedEvent::PublishTx { tick, tx, deps, payload: None, key_id: None, forged: false });
    }
    late.shuffle(&mut rng);
    for d in late.into_iter().take(5) {
        tick += rng.gen_range(0..=6);
        events.push(ScriptedEvent::PublishTx { tick, tx: d, deps: vec![], payload: None, key_id: None, forged: false });
    }
    events.push(ScriptedEvent::EndAt { tick: tick + 40 });
    let quorum = n / 2 + 1;
    Scenario {
        name: format!("limits-{seed}"),
        seed,
        sweep_interval: rng.gen_range(1..=4),
        config: ProtocolConfig {
            node_count: n,
            quorum,
            delta: rng.gen_range(0..=4),
            tau_max: rng.gen_range(1..=10),
            buffer_max: rng.gen_range(1..=5),
            deps_max: rng.gen_range(1..=6),
            min_stake: 0,
            slash_fraction: Fraction::ONE,
            fast_path: rng.gen_bool(0.5),
        },
        rollups: Rollups { count: rollups, stakes: vec![] },
        delay: DelayModel::Uniform { lo: 0, hi: rng.gen_range(0..=4) },
        pool: PoolSetup::default(),
        events,
    }
}

#[test]
fn criterion_3_limits() {
    let (mut timeout_v, mut capacity_v, mut attempts_v) = (0, 0, 0);
    let mut seen = BTreeMap::<RejectReason, u64>::new();
    for seed in 0..LIMIT_SCENARIOS {
        let s = limit_scenario(seed);
        s.validate().expect("limit scenario is valid");
        let cfg = &s.config;
        let trace = run(&s).trace;
        let mut tau = BTreeMap::new();
        let mut buffered: BTreeSet<TxId> = BTreeSet::new();
        let mut sweep_at = None;
        for r in trace.iter() {
            match &r.event {
                TraceEvent::TimestampAssigned { tx, tau: t } => {
                    tau.insert(*tx, *t);
                }
                TraceEvent::Buffered { tx, .. } => {
                    buffered.insert(*tx);
                }
                TraceEvent::Committed { tx, .. } => {
                    buffered.remove(tx);
                }
                TraceEvent::Rejected { tx, reason, attempts } => {
                    buffered.remove(tx);
                    *seen.entry(*reason).or_default() += 1;
                    if *attempts > cfg.deps_max {
                        attempts_v += 1;
                    }
                }
                TraceEvent::AttemptFailed { attempts, .. } => {
                    if *attempts > cfg.deps_max {
                        attempts_v += 1;
                    }
                }
                TraceEvent::SweepStart {} => sweep_at = Some(r.tick),
                TraceEvent::SweepEnd { .. } => {
                    let now = sweep_at.take().expect("sweep start precedes end");
                    if buffered.len() > cfg.buffer_max {
                        capacity_v += 1;
                    }
                    timeout_v += buffered.iter().filter(|t| now.saturating_sub(tau[t]) > cfg.tau_max).count();
                }
                _ => {}
            }
        }
        // nothing may outlive its deadline by a full sweep interval
        let end = s.end_at();
        timeout_v += buffered.iter().filter(|t| end >= tau[t] + cfg.tau_max + s.sweep_interval).count();
    }
    let exercised = [RejectReason::TimedOut, RejectReason::BufferEvicted, RejectReason::AttemptsExhausted]
        .iter()
        .filter(|r| seen.get(r).copied().unwrap_or(0) > 0)
        .count();
    let violations = timeout_v + capacity_v + attempts_v + (3 - exercised);
    verdict(
        3,
        "limits",
        violations,
        format!(
            "{LIMIT_SCENARIOS} scenarios; timeout {timeout_v}, capacity {capacity_v}, attempts {attempts_v}; rejections {seen:?}"
        ),
    );
}

#[test]
fn criterion_4_quorum_timestamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for i in 0..QUORUM_TUPLES {
        let n = rng.gen_range(1..=MAX_NODES);
        let q = rng.gen_range(n / 2 + 1..=n);
        let arrival: Vec<Tick> = (0..n).map(|_| rng.gen_range(0..50)).collect();
        let skews: Vec<i64> = (0..n).map(|_| if rng.gen_bool(0.5) { rng.gen_range(-5..=5) } else { 0 }).collect();
        let cfg = ProtocolConfig {
            node_count: n,
            quorum: q,
            delta: 0,
            tau_max: 1,
            buffer_max: 1,
            deps_max: 1,
            min_stake: 0,
            slash_fraction: Fraction::ONE,
            fast_path: false,
        };
        let mut pool = PoolState::new(&cfg).with_clock_skews(&skews);
        let id = TxId::new(0, i);
        let tx = Transaction::new(id, [], [0; 32], 0, 0).unwrap();
        let mut deliveries = pool.publish(tx, 0, &StakeLedger::new(), |node| arrival[node as usize]).unwrap();
        deliveries.sort();
        let mut engine_tau = None;
        for d in deliveries {
            if let Some(t) = pool.record_receipt(id, d.node, d.at).unwrap() {
                engine_tau = Some(t);
            }
        }

        // oracle: the first q arrivals in (time, node) order, stamped on local clocks
        let mut order: Vec<u32> = (0..n).collect();
        order.sort_by_key(|&k| (arrival[k as usize], k));
        let mut stamps: Vec<Tick> =
            order[..q as usize].iter().map(|&k| arrival[k as usize].saturating_add_signed(skews[k as usize])).collect();
        stamps.sort_unstable();
        if engine_tau != Some(stamps[q as usize - 1]) || pool.tau(&id) != engine_tau {
            mismatches += 1;
        }
    }
    verdict(4, "quorum timestamp", mismatches, format!("{QUORUM_TUPLES} tuples, {mismatches} mismatches"));
}

#[test]
fn criterion_5_determinism() {
    let hash = |t: &Trace| -> [u8; 32] { Sha256::digest(t.to_jsonl().as_bytes()).into() };
    let mut scenarios: Vec<Scenario> = presets::names().map(|n| presets::get(n).unwrap()).collect();
    scenarios.extend((0..).map(|s| mixed_scenario(5000 + s)).take(DETERMINISM_SCENARIOS as usize - scenarios.len()));
    let mut differing = 0;
    for s in &scenarios {
        // a re-parsed copy must behave the same as the original value
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        if hash(&run(s).trace) != hash(&run(&again).trace) {
            differing += 1;
        }
    }
    verdict(
        5,
        "determinism",
        differing,
        format!("{} scenarios run twice, {differing} differing hashes", scenarios.len()),
    );
}

/// Per rollup: (deposited, final stake, slashed total, slash count).
fn stake_books(trace: &Trace) -> BTreeMap<RollupId, (u64, u64, u64, u64)> {
    let mut books: BTreeMap<RollupId, (u64, u64, u64, u64)> = BTreeMap::new();
    for r in trace.iter() {
        match &r.event {
            TraceEvent::Staked { rollup, amount, staked } => {
                let b = books.entry(*rollup).or_default();
                b.0 += amount;
                b.1 = *staked;
            }
            TraceEvent::Slashed { rollup, amount, staked, .. } => {
                let b = books.entry(*rollup).or_default();
                b.1 = *staked;
                b.2 += amount;
                b.3 += 1;
            }
            _ => {}
        }
    }
    books
}

#[test]
fn criterion_6_enforcement() {
    let rogue = RollupId(2);
    let mut problems = Vec::new();

    let books = stake_books(&run(&presets::get("rogue-rollup").unwrap()).trace);
    if books.get(&rogue).map_or(0, |b| b.3) < 1 {
        problems.push("rogue was never slashed".to_owned());
    }
    for (r, b) in &books {
        if *r != rogue && b.3 > 0 {
            problems.push(format!("honest {r} slashed"));
        }
    }
    let honest = stake_books(&run(&presets::get("honest-watchers").unwrap()).trace);
    let honest_slashes: u64 = honest.values().map(|b| b.3).sum();
    if honest_slashes > 0 {
        problems.push(format!("{honest_slashes} slashes with all-honest rollups"));
    }
    for (r, (deposited, staked, slashed, _)) in books.iter().chain(&honest) {
        if deposited != &(staked + slashed) {
            problems.push(format!("{r}: {deposited} != {staked} + {slashed}"));
        }
    }
    let rogue_slashes = books.get(&rogue).map_or(0, |b| b.3);
    verdict(
        6,
        "enforcement",
        problems.len(),
        format!("rogue slashed {rogue_slashes}x, honest-watchers slashes {honest_slashes}; {problems:?}"),
    );
}

/// Dependency statement built from the documented byte layout.
fn statement(members: &[(TxId, Tick)]) -> Vec<u8> {
    let mut sorted = members.to_vec();
    sorted.sort();
    let mut out = vec![1u8];
    out.extend_from_slice(&(sorted.len() as u32).to_be_bytes());
    for (id, tau) in sorted {
        out.extend_from_slice(&id.rollup.0.to_be_bytes());
        out.extend_from_slice(&id.seq.to_be_bytes());
        out.extend_from_slice(&tau.to_be_bytes());
    }
    out
}

/// A pool holding one committed-ready chain of `size` transactions.
fn chain_pool(rng: &mut ChaCha8Rng, size: usize) -> (PoolState, BTreeSet<TxId>, Vec<(TxId, Tick)>) {
    let cfg = ProtocolConfig {
        node_count: 1,
        quorum: 1,
        delta: 1000,
        tau_max: 1,
        buffer_max: 1,
        deps_max: 1,
        min_stake: 0,
        slash_fraction: Fraction::ONE,
        fast_path: false,
    };
    let mut pool = PoolState::new(&cfg);
    let mut members = Vec::new();
    for i in 0..size {
        let id = TxId::new(rng.gen_range(0..4), i as u64);
        let deps = (i > 0).then(|| members.last().map(|m: &(TxId, Tick)| m.0).unwrap());
        let mut payload = [0u8; 32];
        rng.fill(&mut payload);
        let tx = Transaction::new(id, deps, payload, 0, 0).unwrap();
        let at = rng.gen_range(0..100);
        pool.publish(tx, 0, &StakeLedger::new(), |_| at).unwrap();
        let tau = pool.record_receipt(id, 0, at).unwrap().unwrap();
        members.push((id, tau));
    }
    let group = members.iter().map(|m| m.0).collect();
    (pool, group, members)
}

#[test]
fn criterion_7_proofs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rejected_honest = 0;
    for _ in 0..PROOF_TRIALS {
        let size = rng.gen_range(PROOF_GROUP_SIZES);
        let (pool, group, members) = chain_pool(&mut rng, size);
        let artifact = proofs::make_dependency_proof(&group, &pool, 1000).unwrap();
        let round_trip = ProofArtifact::from_bytes(&artifact.to_bytes());
        if !proofs::verify_proof(&artifact, &statement(&members)) || round_trip != Some(artifact) {
            rejected_honest += 1;
        }
    }

    let (pool, group, members) = chain_pool(&mut rng, 5);
    let target = statement(&members);
    let honest = proofs::make_dependency_proof(&group, &pool, 1000).unwrap();
    let mut accepted_random = 0;
    for i in 0..PROOF_TRIALS {
        let mut bytes = [0u8; ARTIFACT_LEN];
        rng.fill(&mut bytes[..]);
        // half the corpus keeps a well-formed header so the seal check is what rejects it
        if i % 2 == 0 {
            bytes[0] = ProofKind::DependencyResolution as u8;
            bytes[1..33].copy_from_slice(&honest.statement_digest);
        }
        if ProofArtifact::from_bytes(&bytes).is_some_and(|a| proofs::verify_proof(&a, &target)) {
            accepted_random += 1;
        }
    }

    let sizes: BTreeSet<usize> = PROOF_GROUP_SIZES
        .map(|k| {
            let (pool, group, _) = chain_pool(&mut rng, k);
            proofs::make_dependency_proof(&group, &pool, 1000).unwrap().to_bytes().len()
        })
        .collect();
    let violations = rejected_honest + accepted_random + usize::from(sizes.len() != 1);
    verdict(
        7,
        "proof layer",
        violations,
        format!(
            "{PROOF_TRIALS} honest: {rejected_honest} rejected; {PROOF_TRIALS} random: {accepted_random} accepted; sizes {sizes:?}"
        ),
    );
}

#[test]
fn criterion_8_fast_path_equivalence() {
    let mut violations = 0;
    let mut earlier = 0;
    for seed in 0..FAST_PATH_SCENARIOS {
        let max_tx = [8, 16, 32][(seed % 3) as usize];
        let commits = |fast: bool| {
            let s = generate(seed, &GenOptions { max_tx, fast_path: Some(fast), ..GenOptions::default() });
            outcome(&run(&s).trace).committed
        };
        let (on, off) = (commits(true), commits(false));
        if !on.keys().eq(off.keys()) || on.iter().any(|(id, t)| *t > off[id]) {
            violations += 1;
        }
        earlier += on.iter().filter(|(id, t)| off.get(id).is_some_and(|o| *t < o)).count();
    }
    verdict(
        8,
        "fast path equivalence",
        violations,
        format!("{FAST_PATH_SCENARIOS} scenarios, {violations} differing, {earlier} commits earlier with fast path"),
    );
}

#[test]
fn criterion_9_auditor_accepts_small_scenarios() {
    let mut rejected = 0;
    let mut first = None;
    for seed in 0..SMALL_SCENARIOS {
        let s = generate(seed, &GenOptions { max_tx: SMALL_MAX_TX, max_nodes: MAX_NODES, ..GenOptions::default() });
        let report = audit(&run(&s).trace);
        if !report.is_clean() {
            rejected += 1;
            first.get_or_insert((seed, report.violations[0].to_string()));
        }
    }
    verdict(
        9,
        "auditor feasibility",
        rejected,
        format!("{SMALL_SCENARIOS} scenarios with <= {SMALL_MAX_TX} txs, {rejected} rejected, first {first:?}"),
    );
}
