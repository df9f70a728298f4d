//! The discrete-event loop.
//!
//! Within a tick, work happens in fixed phases:
//!
//! 1. scripted `node_fail_at` and `publish_tx` events, in file order;
//! 2. deliveries due this tick, by `(tx, node)`;
//! 3. `TimestampAssigned` for every transaction that reached quorum, by id;
//! 4. authenticity checks, then admissions, by id;
//! 5. proof-backed fast-path commits (when enabled);
//! 6. the sweep, on ticks divisible by `sweep_interval`;
//! 7. scripted execution claims and watcher reports, in file order;
//! 8. one `Notified` per rejection of this tick, by id;
//! 9. `End` on the final tick.
//!
//! Initial stakes are posted at tick 0 before anything else.

use std::collections::{BTreeMap, BTreeSet};

use crate::enforcement::{build_claim, ExecutionClaim, ReportOutcome, StakeLedger};
use crate::model::{RollupId, Tick, TxId};
use crate::pool::{PoolError, PoolState};
use crate::proofs::verify_auth;
use crate::scheduler::{Notification, SchedEvent, SchedulerState};
use crate::sim::metrics::{Metrics, MetricsAcc};
use crate::sim::scenario::{Scenario, ScriptedEvent};
use crate::sim::trace::{Trace, TraceEvent};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: Metrics,
}

/// Executes a validated scenario. Pure in the scenario contents.
pub fn run(scenario: &Scenario) -> RunOutput {
    Engine::new(scenario).run()
}

struct Engine<'a> {
    sc: &'a Scenario,
    end: Tick,
    pool: PoolState,
    sched: SchedulerState,
    ledger: StakeLedger,
    trace: Trace,
    deliveries: BTreeMap<Tick, BTreeSet<(TxId, u32)>>,
    failed_at: BTreeMap<u32, Tick>,
    notes: Vec<Notification>,
    metrics: MetricsAcc,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Self {
        Self {
            sc,
            end: sc.end_at(),
            pool: PoolState::new(&sc.config).with_clock_skews(&sc.pool.clock_skews),
            sched: SchedulerState::new(&sc.config),
            ledger: StakeLedger::new(),
            trace: Trace::default(),
            deliveries: BTreeMap::new(),
            failed_at: BTreeMap::new(),
            notes: Vec::new(),
            metrics: MetricsAcc::new(sc.rollups.count),
        }
    }

    fn is_sweep_tick(&self, t: Tick) -> bool {
        t.is_multiple_of(self.sc.sweep_interval)
    }

    fn next_sweep(&self, from: Tick) -> Option<Tick> {
        let k = self.sc.sweep_interval;
        let next = from.div_ceil(k).checked_mul(k)?;
        (next <= self.end).then_some(next)
    }

    fn run(mut self) -> RunOutput {
        let mut skews = self.sc.pool.clock_skews.clone();
        skews.resize(self.sc.config.node_count as usize, 0);
        self.trace.push(
            0,
            TraceEvent::RunStarted {
                scenario: self.sc.name.clone(),
                seed: self.sc.seed,
                sweep_interval: self.sc.sweep_interval,
                end_at: self.end,
                rollups: self.sc.rollups.count,
                clock_skews: skews,
                config: self.sc.config.clone(),
            },
        );
        for (r, amount) in self.sc.rollups.stakes.iter().enumerate() {
            if *amount == 0 {
                continue;
            }
            let acct = self.ledger.stake(RollupId(r as u32), *amount).expect("positive stake");
            self.trace.push(0, TraceEvent::Staked { rollup: acct.rollup, amount: *amount, staked: acct.staked });
        }

        let events = &self.sc.events;
        let mut cursor = 0;
        let mut now = 0;
        loop {
            let start = cursor;
            while cursor < events.len() && events[cursor].tick() == now {
                cursor += 1;
            }
            self.tick(now, &events[start..cursor]);
            if now >= self.end {
                break;
            }
            let candidates = [
                events.get(cursor).map(ScriptedEvent::tick),
                self.deliveries.keys().next().copied(),
                self.next_sweep(now + 1),
            ];
            now = candidates.into_iter().flatten().min().unwrap_or(self.end).min(self.end);
        }

        let unsettled = self.pool.records().filter(|r| !r.status.is_terminal()).count() as u64;
        RunOutput { trace: self.trace, metrics: self.metrics.finish(unsettled) }
    }

    fn tick(&mut self, now: Tick, scripted: &[ScriptedEvent]) {
        for ev in scripted {
            match ev {
                ScriptedEvent::NodeFailAt { node, .. } => {
                    self.failed_at.entry(*node).or_insert(now);
                    self.trace.push(now, TraceEvent::NodeFailed { node: *node });
                }
                ScriptedEvent::PublishTx { .. } => self.publish(now, ev),
                _ => {}
            }
        }

        let mut reached = Vec::new();
        for (txid, node) in self.deliveries.remove(&now).unwrap_or_default() {
            if self.failed_at.get(&node).is_some_and(|f| *f <= now) {
                self.trace.push(now, TraceEvent::DeliveryDropped { tx: txid, node });
                continue;
            }
            let tau = self.pool.record_receipt(txid, node, now).expect("scheduled delivery is valid");
            self.trace.push(now, TraceEvent::Delivered { tx: txid, node, receipt: self.pool.local_time(node, now) });
            if tau.is_some() {
                reached.push(txid);
            }
        }
        reached.sort();

        for txid in &reached {
            let tau = self.pool.tau(txid).unwrap();
            self.trace.push(now, TraceEvent::TimestampAssigned { tx: *txid, tau });
        }

        let mut authentic = Vec::new();
        for txid in reached {
            if verify_auth(&self.pool.get_record(&txid).unwrap().tx) {
                authentic.push(txid);
            } else {
                let note = self
                    .sched
                    .reject(&mut self.pool, txid, crate::model::RejectReason::AuthFailed, now)
                    .expect("timestamped transaction can be rejected");
                self.apply(now, SchedEvent::Rejected { txid, reason: note.reason, attempts: 0 });
                self.notes.push(note);
            }
        }
        for txid in authentic {
            self.trace.push(now, TraceEvent::Admitted { tx: txid });
            // an earlier admission this tick may already have committed it as part of its group
            if self.pool.status(&txid) != Some(crate::model::Status::Timestamped) {
                continue;
            }
            let mut out = Vec::new();
            self.sched.admit(&mut self.pool, txid, now, &mut out).expect("admission of a timestamped transaction");
            self.apply_all(now, out);
        }

        if self.sc.config.fast_path {
            let mut out = Vec::new();
            let next = self.next_sweep(now);
            self.sched.fast_path(&mut self.pool, next, &mut out).expect("fast path commits are consistent");
            self.apply_all(now, out);
        }

        if self.is_sweep_tick(now) {
            self.trace.push(now, TraceEvent::SweepStart {});
            let out = self.sched.sweep(&mut self.pool, now).expect("sweep is consistent");
            self.apply_all(now, out);
            let buffered = self.sched.buffer_len();
            self.metrics.sweeps += 1;
            self.metrics.occupancy_sum += buffered as u64;
            self.metrics.occupancy_max = self.metrics.occupancy_max.max(buffered);
            self.trace.push(now, TraceEvent::SweepEnd { buffered });
        }

        for ev in scripted {
            match ev {
                ScriptedEvent::RogueExecutionClaim { rollup, tx, executed_deps, .. } => {
                    self.execution_claim(now, RollupId(*rollup), *tx, executed_deps.as_deref())
                }
                ScriptedEvent::WatcherObserve { watcher, accused, tx, claim, .. } => {
                    let accused = RollupId(*accused);
                    let observed = self.ledger.execution(accused, *tx).cloned();
                    let claim = build_claim(*watcher, accused, *tx, *claim, observed.as_ref(), &self.pool);
                    self.trace.push(
                        now,
                        TraceEvent::ClaimReported {
                            watcher: claim.watcher,
                            accused,
                            tx: claim.txid,
                            claim: claim.claimed,
                        },
                    );
                    let event = match self.ledger.report(&claim, &self.pool, self.sc.config.slash_fraction) {
                        ReportOutcome::Slashed(s) => {
                            *self.metrics.slash_total.entry(s.rollup).or_default() += s.amount;
                            TraceEvent::Slashed {
                                rollup: s.rollup,
                                tx: s.txid,
                                claim: s.claimed,
                                watcher: s.watcher,
                                amount: s.amount,
                                staked: s.staked_after,
                            }
                        }
                        ReportOutcome::ClaimRejected(why) => TraceEvent::ClaimRejected {
                            watcher: claim.watcher,
                            accused,
                            tx: claim.txid,
                            claim: claim.claimed,
                            why,
                        },
                    };
                    self.trace.push(now, event);
                }
                _ => {}
            }
        }

        let mut notes = std::mem::take(&mut self.notes);
        notes.sort_by_key(|n| n.txid);
        for n in notes {
            self.trace.push(now, TraceEvent::Notified { tx: n.txid, target: n.target, reason: n.reason });
        }

        if now == self.end {
            self.trace.push(now, TraceEvent::End {});
        }
    }

    fn publish(&mut self, now: Tick, ev: &ScriptedEvent) {
        let tx = Scenario::transaction(ev).expect("publish event");
        let txid = tx.id;
        let published = TraceEvent::Published {
            tx: txid,
            deps: tx.deps.iter().copied().collect(),
            key_id: tx.auth_token.key_id,
            payload_digest: tx.payload_digest,
            tag: tx.auth_token.tag,
        };
        let (seed, delay) = (self.sc.seed, &self.sc.delay);
        match self.pool.publish(tx, now, &self.ledger, |node| delay.delay(seed, txid, node)) {
            Ok(deliveries) => {
                self.metrics.published += 1;
                self.trace.push(now, published);
                for d in deliveries {
                    self.deliveries.entry(d.at).or_default().insert((d.txid, d.node));
                }
            }
            Err(PoolError::InsufficientStake { staked, required, .. }) => {
                self.metrics.refused += 1;
                self.trace.push(now, TraceEvent::PublishRefused { tx: txid, staked, required });
            }
            Err(e) => unreachable!("validated scenario cannot fail to publish: {e}"),
        }
    }

    fn execution_claim(&mut self, now: Tick, rollup: RollupId, txid: TxId, deps: Option<&[TxId]>) {
        let executed_deps = match deps {
            Some(d) => d.iter().copied().collect(),
            None => self.pool.get_record(&txid).map(|r| r.tx.deps.clone()).unwrap_or_default(),
        };
        let claim = ExecutionClaim { rollup, txid, executed_deps, at: now };
        self.trace.push(
            now,
            TraceEvent::ExecutionClaimed {
                rollup,
                tx: txid,
                executed_deps: claim.executed_deps.iter().copied().collect(),
                digest: claim.digest(),
            },
        );
        self.ledger.record_execution(claim);
    }

    fn apply_all(&mut self, now: Tick, events: Vec<SchedEvent>) {
        for e in events {
            self.apply(now, e);
        }
    }

    fn apply(&mut self, now: Tick, event: SchedEvent) {
        let ev = match event {
            SchedEvent::Committed { txid, root, group, tau, via_proof } => {
                let latency = now.saturating_sub(tau);
                self.metrics.committed += 1;
                self.metrics.latency_sum += latency;
                self.metrics.latency_max = self.metrics.latency_max.max(latency);
                TraceEvent::Committed { tx: txid, tau, root, group, via_proof }
            }
            SchedEvent::Buffered { txid, tau } => TraceEvent::Buffered { tx: txid, tau },
            SchedEvent::AttemptFailed { txid, attempts, wait } => {
                TraceEvent::AttemptFailed { tx: txid, attempts, wait }
            }
            SchedEvent::Rejected { txid, reason, attempts } => {
                *self.metrics.rejected.entry(reason).or_default() += 1;
                TraceEvent::Rejected { tx: txid, reason, attempts }
            }
            SchedEvent::Notified(n) => {
                self.notes.push(n);
                return;
            }
        };
        self.trace.push(now, ev);
    }
}
