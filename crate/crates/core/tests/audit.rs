//! The auditor must reject traces that break a rule. Each test takes a clean
//! engine trace, tampers with it, and checks which rule fires.

use dcp_core::sim::{audit, presets, run, Scenario, Trace, TraceEvent};
use dcp_core::TxId;

fn clean(name: &str) -> Trace {
    let t = run(&presets::get(name).unwrap()).trace;
    assert!(audit(&t).is_clean());
    t
}

fn rules(t: &Trace) -> Vec<&'static str> {
    audit(t).violations.iter().map(|v| v.rule).collect()
}

fn position(t: &Trace, pred: impl Fn(&TraceEvent) -> bool) -> usize {
    t.records.iter().position(|r| pred(&r.event)).expect("record present")
}

#[test]
fn wrong_timestamp_is_caught() {
    let mut t = clean("shared-sequencer");
    let i = position(&t, |e| matches!(e, TraceEvent::TimestampAssigned { .. }));
    if let TraceEvent::TimestampAssigned { tau, .. } = &mut t.records[i].event {
        *tau += 1;
    }
    assert!(rules(&t).contains(&"quorum-timestamp"));
}

#[test]
fn missing_notification_is_caught() {
    let mut t = clean("multi-rollup-mesh");
    let i = position(&t, |e| matches!(e, TraceEvent::Notified { .. }));
    t.records.remove(i);
    assert!(rules(&t).contains(&"notification"));
}

#[test]
fn proof_commit_without_fast_path_is_caught() {
    let mut t = clean("shared-sequencer");
    let i = position(&t, |e| matches!(e, TraceEvent::Committed { .. }));
    if let TraceEvent::Committed { via_proof, .. } = &mut t.records[i].event {
        *via_proof = true;
    }
    assert!(rules(&t).contains(&"fast-path"));
}

#[test]
fn inflated_slash_breaks_amount_and_conservation() {
    let mut t = clean("rogue-rollup");
    let i = position(&t, |e| matches!(e, TraceEvent::Slashed { .. }));
    if let TraceEvent::Slashed { amount, .. } = &mut t.records[i].event {
        *amount += 1;
    }
    let r = rules(&t);
    assert!(r.contains(&"slash") && r.contains(&"conservation"), "{r:?}");
}

#[test]
fn slash_of_honest_rollup_is_caught() {
    let mut t = clean("honest-watchers");
    let i = position(&t, |e| matches!(e, TraceEvent::ClaimRejected { .. }));
    let TraceEvent::ClaimRejected { watcher, accused, tx, claim, .. } = t.records[i].event.clone() else {
        unreachable!()
    };
    t.records[i].event = TraceEvent::Slashed { rollup: accused, tx, claim, watcher, amount: 10, staked: 30 };
    assert!(rules(&t).contains(&"false-slash"));
}

#[test]
fn skipped_sweep_is_caught() {
    let mut t = clean("shared-sequencer");
    let i = position(&t, |e| matches!(e, TraceEvent::SweepStart {}));
    t.records.drain(i..i + 2);
    assert!(rules(&t).contains(&"sweep"));
}

#[test]
fn misreported_occupancy_is_caught() {
    let mut t = clean("multi-rollup-mesh");
    let i = position(&t, |e| matches!(e, TraceEvent::SweepEnd { buffered } if *buffered > 0));
    t.records[i].event = TraceEvent::SweepEnd { buffered: 0 };
    assert!(rules(&t).contains(&"capacity"));
}

#[test]
fn tighter_delta_exposes_committed_groups() {
    let mut t = clean("shared-sequencer");
    if let TraceEvent::RunStarted { config, .. } = &mut t.records[0].event {
        config.delta = 0;
    }
    assert!(rules(&t).contains(&"delta-rule"));
}

#[test]
fn partial_commit_is_caught() {
    let text = r#"
        [config]
        node_count = 1
        quorum = 1
        delta = 5
        tau_max = 5
        buffer_max = 4
        deps_max = 2

        [rollups]
        count = 2

        [[events]]
        kind = "publish_tx"
        tick = 0
        tx = "0:0"
        forged = true

        [[events]]
        kind = "publish_tx"
        tick = 0
        tx = "1:0"
        deps = ["0:0"]

        [[events]]
        kind = "end_at"
        tick = 4
    "#;
    let mut t = run(&Scenario::from_toml(text).unwrap()).trace;
    assert!(audit(&t).is_clean());
    let dependent = TxId::new(1, 0);
    let i = position(&t, |e| matches!(e, TraceEvent::Rejected { tx, .. } if *tx == dependent));
    let tick = t.records[i].tick;
    t.records[i].event =
        TraceEvent::Committed { tx: dependent, tau: 0, root: dependent, group: vec![dependent], via_proof: false };
    t.records.retain(|r| !matches!(r.event, TraceEvent::Notified { tx, .. } if tx == dependent));
    assert_eq!(t.records[i].tick, tick);
    assert!(rules(&t).contains(&"atomicity"));
}

#[test]
fn forged_tag_admission_is_caught() {
    let mut t = clean("shared-sequencer");
    let i = position(&t, |e| matches!(e, TraceEvent::Published { .. }));
    if let TraceEvent::Published { tag, .. } = &mut t.records[i].event {
        tag[31] ^= 0x80;
    }
    let r = rules(&t);
    assert!(r.contains(&"admission") && r.contains(&"commit"), "{r:?}");
}

#[test]
fn truncated_and_reordered_traces_are_caught() {
    let mut t = clean("shared-sequencer");
    t.records.pop();
    assert!(rules(&t).contains(&"end"));

    let mut t = clean("shared-sequencer");
    let last = t.records.len() - 2;
    t.records.swap(1, last);
    assert!(rules(&t).contains(&"tick-order"));
}

#[test]
fn premature_timeout_is_caught() {
    let mut t = clean("multi-rollup-mesh");
    let i = position(&t, |e| matches!(e, TraceEvent::Rejected { reason: dcp_core::RejectReason::BufferEvicted, .. }));
    if let TraceEvent::Rejected { reason, .. } = &mut t.records[i].event {
        *reason = dcp_core::RejectReason::TimedOut;
    }
    // the matching notification must agree too
    let TraceEvent::Rejected { tx: victim, .. } = t.records[i].event else { unreachable!() };
    for r in &mut t.records {
        if let TraceEvent::Notified { tx, reason, .. } = &mut r.event {
            if *tx == victim {
                *reason = dcp_core::RejectReason::TimedOut;
            }
        }
    }
    assert!(rules(&t).contains(&"rejection"));
}
