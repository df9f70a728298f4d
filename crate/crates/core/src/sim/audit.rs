//! Offline trace auditor.
//!
//! Replays a trace from its records alone and checks every protocol rule
//! against its own bookkeeping. Nothing here calls into the pool, scheduler
//! or enforcement code: dependency closures come from a Warshall
//! transitive closure over bitset rows, auth tags are recomputed from the
//! published fields, and slash amounts are recomputed from the replayed
//! stakes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::enforcement::ClaimKind;
use crate::model::{ProtocolConfig, RejectReason, RollupId, Tick, TxId};
use crate::sim::trace::{Trace, TraceEvent, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based record index, 0 for end-of-trace checks.
    pub line: usize,
    pub tick: Tick,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} tick {}: [{}] {}", self.line, self.tick, self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    pub records: usize,
    pub published: usize,
    pub committed: usize,
    pub rejected: usize,
    pub slashes: usize,
    pub sweeps: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum St {
    Pending,
    Timestamped,
    Buffered,
    Committed,
    Rejected(RejectReason),
}

fn legal(from: St, to: St) -> bool {
    matches!(
        (from, to),
        (St::Pending, St::Timestamped)
            | (St::Timestamped, St::Buffered | St::Committed | St::Rejected(_))
            | (St::Buffered, St::Committed | St::Rejected(_))
    )
}

#[derive(Debug, Clone)]
struct TxRow {
    deps: Vec<TxId>,
    published: Tick,
    auth_ok: bool,
    receipts: Vec<Tick>,
    receipt_nodes: BTreeSet<u32>,
    expected_tau: Option<Tick>,
    quorum_tick: Option<Tick>,
    tau: Option<Tick>,
    status: St,
    attempts: u32,
    admitted: bool,
    status_tick: Tick,
    notified: bool,
}

/// Bitset rows over published-transaction indices.
#[derive(Debug, Clone, Default)]
struct Reach {
    rows: Vec<Vec<u64>>,
}

impl Reach {
    #[cfg(test)]
    fn has(&self, i: usize, j: usize) -> bool {
        self.rows[i][j / 64] >> (j % 64) & 1 == 1
    }

    fn members(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i]
            .iter()
            .enumerate()
            .flat_map(|(w, bits)| (0..64).filter(move |b| bits >> b & 1 == 1).map(move |b| w * 64 + b))
    }
}

/// Warshall's algorithm with one bitset row per vertex.
fn warshall(adj: &[Vec<usize>]) -> Reach {
    let n = adj.len();
    let words = n.div_ceil(64).max(1);
    let mut rows = vec![vec![0u64; words]; n];
    for (i, out) in adj.iter().enumerate() {
        rows[i][i / 64] |= 1 << (i % 64);
        for &j in out {
            rows[i][j / 64] |= 1 << (j % 64);
        }
    }
    for k in 0..n {
        let row_k = rows[k].clone();
        for row in rows.iter_mut() {
            if row[k / 64] >> (k % 64) & 1 == 1 {
                for (a, b) in row.iter_mut().zip(&row_k) {
                    *a |= b;
                }
            }
        }
    }
    Reach { rows }
}

fn auth_tag(key_id: u64, tx: TxId, payload: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"dcp/auth/v1");
    h.update(key_id.to_be_bytes());
    h.update(tx.rollup.0.to_be_bytes());
    h.update(tx.seq.to_be_bytes());
    h.update(payload);
    h.finalize().into()
}

struct Auditor {
    cfg: ProtocolConfig,
    interval: Tick,
    end_at: Tick,
    rollups: u32,
    skews: Vec<i64>,
    ids: Vec<TxId>,
    index: BTreeMap<TxId, usize>,
    txs: Vec<TxRow>,
    reach: Option<Reach>,
    stake: BTreeMap<RollupId, u64>,
    deposited: BTreeMap<RollupId, u64>,
    slashed: BTreeMap<RollupId, u64>,
    failed: BTreeMap<u32, Tick>,
    executions: BTreeMap<(RollupId, TxId), BTreeSet<TxId>>,
    punished: BTreeSet<(RollupId, TxId, ClaimKind)>,
    last_report: Option<(u32, RollupId, TxId, ClaimKind)>,
    in_sweep: bool,
    sweep_ticks: BTreeSet<Tick>,
    sweep_snapshot: BTreeSet<usize>,
    attempted: BTreeSet<usize>,
    tick: Tick,
    tick_commits: BTreeSet<usize>,
    line: usize,
    report: AuditReport,
    ended: bool,
}

impl Auditor {
    fn flag(&mut self, rule: &'static str, detail: impl Into<String>) {
        self.report.violations.push(Violation { line: self.line, tick: self.tick, rule, detail: detail.into() });
    }

    fn reach(&mut self) -> &Reach {
        if self.reach.is_none() {
            let adj: Vec<Vec<usize>> =
                self.txs.iter().map(|t| t.deps.iter().filter_map(|d| self.index.get(d).copied()).collect()).collect();
            self.reach = Some(warshall(&adj));
        }
        self.reach.as_ref().unwrap()
    }

    fn closure(&mut self, i: usize) -> Vec<usize> {
        self.reach().members(i).collect()
    }

    fn closure_has_rejected(&mut self, i: usize) -> bool {
        self.closure(i).into_iter().any(|j| matches!(self.txs[j].status, St::Rejected(_)))
    }

    /// Could the closure of `i` commit in the current state?
    fn ready(&mut self, i: usize) -> bool {
        let members = self.closure(i);
        let mut lo = Tick::MAX;
        let mut hi = 0;
        for j in members {
            let t = &self.txs[j];
            if matches!(t.status, St::Rejected(_)) || t.deps.iter().any(|d| !self.index.contains_key(d)) {
                return false;
            }
            let Some(tau) = t.tau else { return false };
            lo = lo.min(tau);
            hi = hi.max(tau);
        }
        hi - lo <= self.cfg.delta
    }

    fn lookup(&mut self, tx: TxId) -> Option<usize> {
        let i = self.index.get(&tx).copied();
        if i.is_none() {
            self.flag("known-tx", format!("{tx} was never published"));
        }
        i
    }

    fn transition(&mut self, i: usize, to: St) {
        let from = self.txs[i].status;
        if !legal(from, to) {
            let id = self.ids[i];
            self.flag("status-machine", format!("{id}: illegal transition {from:?} -> {to:?}"));
        }
        self.txs[i].status = to;
        self.txs[i].status_tick = self.tick;
    }

    fn buffered(&self) -> Vec<usize> {
        (0..self.txs.len()).filter(|&i| self.txs[i].status == St::Buffered).collect()
    }

    fn next_sweep(&self, from: Tick) -> Tick {
        from.div_ceil(self.interval) * self.interval
    }

    /// Checks that apply once all records of a tick are in.
    fn close_tick(&mut self) {
        let now = self.tick;
        for i in 0..self.txs.len() {
            let t = self.txs[i].clone();
            let id = self.ids[i];
            if t.quorum_tick == Some(now) && t.tau.is_none() {
                self.flag("quorum-timestamp", format!("{id} reached quorum but was not timestamped"));
            }
            if t.status == St::Timestamped {
                self.flag("admission", format!("{id} left timestamped but neither admitted nor rejected"));
            }
            if matches!(t.status, St::Rejected(_)) && !t.notified && t.status_tick == now {
                self.flag("notification", format!("{id} rejected without a notification in the same tick"));
            }
        }
        let commits = std::mem::take(&mut self.tick_commits);
        for i in commits {
            self.check_committed_closure(i);
        }
    }

    fn check_committed_closure(&mut self, i: usize) {
        let id = self.ids[i];
        let members = self.closure(i);
        let mut taus = Vec::new();
        for &j in &members {
            let t = self.txs[j].clone();
            if t.status != St::Committed {
                let m = self.ids[j];
                self.flag("atomicity", format!("{id} committed while closure member {m} is {:?}", t.status));
            }
            if let Some(missing) = t.deps.iter().find(|d| !self.index.contains_key(d)) {
                let missing = *missing;
                self.flag("atomicity", format!("{id} committed with unpublished dependency {missing}"));
            }
            taus.extend(t.tau);
        }
        // pairwise check over the closure
        for (a, ta) in taus.iter().enumerate() {
            for tb in &taus[a + 1..] {
                if ta.abs_diff(*tb) > self.cfg.delta {
                    self.flag("delta-rule", format!("closure of {id} has |{ta} - {tb}| > {}", self.cfg.delta));
                    return;
                }
            }
        }
    }

    fn step(&mut self, rec: &TraceRecord) {
        if rec.tick < self.tick {
            self.flag("tick-order", format!("tick {} after {}", rec.tick, self.tick));
        }
        if rec.tick != self.tick {
            self.close_tick();
            self.tick = rec.tick;
        }
        if self.ended {
            self.flag("end", "records after End");
        }
        let now = self.tick;
        match &rec.event {
            TraceEvent::RunStarted { .. } => self.flag("header", "RunStarted must appear only as the first record"),
            TraceEvent::Staked { rollup, amount, staked } => {
                if rollup.0 >= self.rollups {
                    self.flag("stake", format!("unknown rollup {rollup}"));
                }
                let s = self.stake.entry(*rollup).or_default();
                *s += amount;
                let s = *s;
                *self.deposited.entry(*rollup).or_default() += amount;
                if s != *staked || *amount == 0 {
                    self.flag("stake", format!("{rollup}: staked {staked} but replay gives {s}"));
                }
            }
            TraceEvent::NodeFailed { node } => {
                self.failed.entry(*node).or_insert(now);
            }
            TraceEvent::Published { tx, deps, key_id, payload_digest, tag } => {
                if self.index.contains_key(tx) {
                    self.flag("duplicate", format!("{tx} published twice"));
                    return;
                }
                if tx.rollup.0 >= self.rollups {
                    self.flag("publish", format!("{tx} from unknown rollup"));
                }
                let staked = self.stake.get(&tx.rollup).copied().unwrap_or(0);
                if staked < self.cfg.min_stake {
                    self.flag("stake-gate", format!("{tx} published with stake {staked} < {}", self.cfg.min_stake));
                }
                if deps.contains(tx) {
                    self.flag("publish", format!("{tx} depends on itself"));
                }
                self.index.insert(*tx, self.ids.len());
                self.ids.push(*tx);
                self.txs.push(TxRow {
                    deps: deps.clone(),
                    published: now,
                    auth_ok: auth_tag(*key_id, *tx, payload_digest) == *tag,
                    receipts: Vec::new(),
                    receipt_nodes: BTreeSet::new(),
                    expected_tau: None,
                    quorum_tick: None,
                    tau: None,
                    status: St::Pending,
                    attempts: 0,
                    admitted: false,
                    status_tick: now,
                    notified: false,
                });
                self.reach = None;
                self.report.published += 1;
            }
            TraceEvent::PublishRefused { tx, staked, required } => {
                let s = self.stake.get(&tx.rollup).copied().unwrap_or(0);
                if s >= self.cfg.min_stake || s != *staked || *required != self.cfg.min_stake {
                    self.flag("stake-gate", format!("{tx} refused although stake {s} >= {}", self.cfg.min_stake));
                }
            }
            TraceEvent::Delivered { tx, node, receipt } => {
                let Some(i) = self.lookup(*tx) else { return };
                if *node >= self.cfg.node_count {
                    self.flag("delivery", format!("{tx} delivered to unknown node {node}"));
                    return;
                }
                if self.failed.get(node).is_some_and(|f| *f <= now) {
                    self.flag("node-failure", format!("{tx} delivered to failed node {node}"));
                }
                if now < self.txs[i].published {
                    self.flag("delivery", format!("{tx} delivered before it was published"));
                }
                let skew = self.skews.get(*node as usize).copied().unwrap_or(0);
                if *receipt != now.saturating_add_signed(skew) {
                    self.flag("delivery", format!("{tx} receipt {receipt} does not match node clock"));
                }
                let q = self.cfg.quorum as usize;
                let row = &mut self.txs[i];
                if !row.receipt_nodes.insert(*node) {
                    self.flag("delivery", format!("{tx} receipted twice by node {node}"));
                    return;
                }
                row.receipts.push(*receipt);
                if row.receipts.len() == q && row.expected_tau.is_none() {
                    let mut sorted = row.receipts.clone();
                    sorted.sort_unstable();
                    row.expected_tau = Some(sorted[q - 1]);
                    row.quorum_tick = Some(now);
                }
            }
            TraceEvent::DeliveryDropped { tx, node } => {
                if !self.failed.get(node).is_some_and(|f| *f <= now) {
                    self.flag("node-failure", format!("{tx} dropped at live node {node}"));
                }
            }
            TraceEvent::TimestampAssigned { tx, tau } => {
                let Some(i) = self.lookup(*tx) else { return };
                let row = &self.txs[i];
                if row.expected_tau != Some(*tau) || row.quorum_tick != Some(now) || row.tau.is_some() {
                    let want = row.expected_tau;
                    self.flag("quorum-timestamp", format!("{tx}: tau {tau}, expected {want:?} at quorum"));
                }
                self.txs[i].tau = Some(*tau);
                self.transition(i, St::Timestamped);
            }
            TraceEvent::Admitted { tx } => {
                let Some(i) = self.lookup(*tx) else { return };
                let row = &self.txs[i];
                let ok_state = row.status == St::Timestamped || (row.status == St::Committed && row.status_tick == now);
                if !ok_state || !row.auth_ok || row.quorum_tick != Some(now) {
                    self.flag(
                        "admission",
                        format!("{tx} admitted in state {:?} (auth ok: {})", row.status, row.auth_ok),
                    );
                }
                self.txs[i].admitted = true;
            }
            TraceEvent::Buffered { tx, tau } => {
                let Some(i) = self.lookup(*tx) else { return };
                if self.txs[i].tau != Some(*tau) || !self.txs[i].admitted {
                    self.flag("admission", format!("{tx} buffered without admission"));
                }
                if self.ready(i) {
                    self.flag("admission", format!("{tx} buffered although its closure could commit"));
                }
                self.transition(i, St::Buffered);
                self.txs[i].attempts = 0;
            }
            TraceEvent::Committed { tx, tau, root, group, via_proof } => {
                let Some(i) = self.lookup(*tx) else { return };
                let row = self.txs[i].clone();
                if row.tau != Some(*tau) {
                    self.flag("commit", format!("{tx} committed with tau {tau}, recorded {:?}", row.tau));
                }
                if !row.auth_ok {
                    self.flag("commit", format!("{tx} committed without valid authentication"));
                }
                if !group.contains(tx) {
                    self.flag("commit", format!("{tx} not in its own commit group"));
                }
                if *via_proof {
                    if !self.cfg.fast_path {
                        self.flag("fast-path", format!("{tx} committed via proof with fast_path off"));
                    }
                    if self.in_sweep {
                        self.flag("fast-path", format!("{tx} proof commit inside a sweep"));
                    }
                    let ns = self.next_sweep(now);
                    if ns > self.end_at || ns.saturating_sub(*tau) > self.cfg.tau_max {
                        self.flag("fast-path", format!("{tx} proof commit would not survive until sweep {ns}"));
                    }
                }
                if !self.in_sweep && !*via_proof {
                    let r = self.index.get(root).copied();
                    if r.is_none_or(|r| self.txs[r].quorum_tick != Some(now)) {
                        self.flag("commit", format!("{tx} committed outside a sweep by non-admitted root {root}"));
                    }
                }
                self.transition(i, St::Committed);
                self.tick_commits.insert(i);
                self.report.committed += 1;
            }
            TraceEvent::AttemptFailed { tx, attempts, .. } => {
                let Some(i) = self.lookup(*tx) else { return };
                if !self.in_sweep || self.txs[i].status != St::Buffered {
                    self.flag("attempts", format!("{tx} attempt outside a sweep or while not buffered"));
                }
                if !self.attempted.insert(i) {
                    self.flag("attempts", format!("{tx} attempted twice in one sweep"));
                }
                let want = self.txs[i].attempts + 1;
                if *attempts != want || *attempts > self.cfg.deps_max {
                    self.flag(
                        "attempts",
                        format!("{tx} attempts {attempts}, replay {want}, limit {}", self.cfg.deps_max),
                    );
                }
                if self.ready(i) || self.closure_has_rejected(i) {
                    self.flag("attempts", format!("{tx} counted a failed attempt although it was decidable"));
                }
                self.txs[i].attempts = *attempts;
            }
            TraceEvent::Rejected { tx, reason, attempts } => {
                let Some(i) = self.lookup(*tx) else { return };
                let row = self.txs[i].clone();
                if *attempts != row.attempts {
                    self.flag("rejection", format!("{tx} rejected with attempts {attempts}, replay {}", row.attempts));
                }
                let sweep_reason = !matches!(reason, RejectReason::AuthFailed);
                if sweep_reason != self.in_sweep {
                    self.flag(
                        "rejection",
                        format!("{tx} rejected {reason} {} a sweep", if self.in_sweep { "inside" } else { "outside" }),
                    );
                }
                match reason {
                    RejectReason::AuthFailed => {
                        if row.auth_ok || row.status != St::Timestamped {
                            self.flag("rejection", format!("{tx} AuthFailed but tag verifies"));
                        }
                    }
                    RejectReason::TimedOut => {
                        if row.tau.is_none_or(|t| now.saturating_sub(t) <= self.cfg.tau_max) {
                            self.flag("rejection", format!("{tx} TimedOut before exceeding tau_max"));
                        }
                    }
                    RejectReason::AttemptsExhausted => {
                        if row.attempts != self.cfg.deps_max || self.ready(i) {
                            self.flag("rejection", format!("{tx} AttemptsExhausted after {} attempts", row.attempts));
                        }
                    }
                    RejectReason::BufferEvicted => {
                        let buffered = self.buffered();
                        let oldest = buffered.iter().copied().min_by_key(|&j| (self.txs[j].tau, self.ids[j]));
                        if buffered.len() <= self.cfg.buffer_max || oldest != Some(i) {
                            self.flag(
                                "rejection",
                                format!(
                                    "{tx} evicted with {} buffered (limit {}) or not oldest",
                                    buffered.len(),
                                    self.cfg.buffer_max
                                ),
                            );
                        }
                    }
                    RejectReason::DependencyRejected => {
                        if !self.closure_has_rejected(i) {
                            self.flag("rejection", format!("{tx} DependencyRejected with no rejected closure member"));
                        }
                    }
                }
                if row.status == St::Buffered
                    && self.in_sweep
                    && self.attempted.contains(&i)
                    && *reason == RejectReason::TimedOut
                {
                    self.flag("rejection", format!("{tx} timed out after being re-attempted"));
                }
                self.transition(i, St::Rejected(*reason));
                self.report.rejected += 1;
            }
            TraceEvent::Notified { tx, target, reason } => {
                let Some(i) = self.lookup(*tx) else { return };
                let row = &self.txs[i];
                if row.status != St::Rejected(*reason) || row.notified || row.status_tick != now || *target != tx.rollup
                {
                    self.flag("notification", format!("{tx} notification does not match a fresh rejection"));
                }
                self.txs[i].notified = true;
            }
            TraceEvent::SweepStart {} => {
                if self.in_sweep || !now.is_multiple_of(self.interval) || !self.sweep_ticks.insert(now) {
                    self.flag("sweep", "unexpected SweepStart");
                }
                self.in_sweep = true;
                self.sweep_snapshot = self.buffered().into_iter().collect();
                self.attempted.clear();
                self.report.sweeps += 1;
            }
            TraceEvent::SweepEnd { buffered } => {
                if !self.in_sweep {
                    self.flag("sweep", "SweepEnd without SweepStart");
                }
                self.in_sweep = false;
                let live = self.buffered();
                if live.len() != *buffered {
                    self.flag("capacity", format!("reported {buffered} buffered, replay {}", live.len()));
                }
                if live.len() > self.cfg.buffer_max {
                    self.flag("capacity", format!("{} buffered > buffer_max {}", live.len(), self.cfg.buffer_max));
                }
                for i in live {
                    let id = self.ids[i];
                    let tau = self.txs[i].tau.unwrap_or(0);
                    if now.saturating_sub(tau) > self.cfg.tau_max {
                        self.flag(
                            "timeout",
                            format!("{id} still buffered at age {} > tau_max", now.saturating_sub(tau)),
                        );
                    }
                    if self.sweep_snapshot.contains(&i) && !self.attempted.contains(&i) {
                        self.flag("attempts", format!("{id} survived a sweep without an attempt"));
                    }
                    if self.txs[i].attempts > self.cfg.deps_max {
                        self.flag("attempts", format!("{id} attempts exceed deps_max"));
                    }
                    if self.closure_has_rejected(i) {
                        self.flag("dependency", format!("{id} still buffered with a rejected dependency"));
                    }
                    if self.ready(i) {
                        self.flag("resolution", format!("{id} still buffered although resolvable"));
                    }
                }
            }
            TraceEvent::ExecutionClaimed { rollup, tx, executed_deps, .. } => {
                self.executions.insert((*rollup, *tx), executed_deps.iter().copied().collect());
            }
            TraceEvent::ClaimReported { watcher, accused, tx, claim } => {
                self.last_report = Some((*watcher, *accused, *tx, *claim));
            }
            TraceEvent::Slashed { rollup, tx, claim, watcher, amount, staked } => {
                if self.last_report.take() != Some((*watcher, *rollup, *tx, *claim)) {
                    self.flag("slash", format!("slash of {rollup} without a matching report"));
                }
                if !self.violation_holds(*rollup, *tx, *claim) {
                    self.flag("false-slash", format!("{rollup} slashed over {tx} ({claim:?}) without misbehavior"));
                }
                if !self.punished.insert((*rollup, *tx, *claim)) {
                    self.flag("slash", format!("{rollup} slashed twice for {tx} {claim:?}"));
                }
                let before = self.stake.get(rollup).copied().unwrap_or(0);
                let f = self.cfg.slash_fraction;
                let want = (u128::from(before) * u128::from(f.numer()) / u128::from(f.denom())) as u64;
                if *amount != want || *staked != before - want.min(before) {
                    self.flag(
                        "slash",
                        format!("{rollup}: slash {amount} (left {staked}), expected {want} of {before}"),
                    );
                }
                // carry the reported balance so conservation checks the trace, not the replay
                self.stake.insert(*rollup, *staked);
                *self.slashed.entry(*rollup).or_default() += amount;
                self.report.slashes += 1;
            }
            TraceEvent::ClaimRejected { watcher, accused, tx, claim, .. } => {
                if self.last_report.take() != Some((*watcher, *accused, *tx, *claim)) {
                    self.flag("slash", format!("claim against {accused} rejected without a matching report"));
                }
                if self.violation_holds(*accused, *tx, *claim) && !self.punished.contains(&(*accused, *tx, *claim)) {
                    self.flag("detection", format!("valid claim against {accused} over {tx} ({claim:?}) was rejected"));
                }
            }
            TraceEvent::End {} => {
                if now != self.end_at {
                    self.flag("end", format!("End at {now}, expected {}", self.end_at));
                }
                self.ended = true;
            }
        }
    }

    fn violation_holds(&mut self, accused: RollupId, tx: TxId, claim: ClaimKind) -> bool {
        if !self.deposited.contains_key(&accused) {
            return false;
        }
        let Some(executed) = self.executions.get(&(accused, tx)).cloned() else { return false };
        let row = self.index.get(&tx).map(|&i| &self.txs[i]);
        match claim {
            ClaimKind::ExecutedRejected => row.is_some_and(|r| matches!(r.status, St::Rejected(_))),
            ClaimKind::ExecutedWithoutValidation => row.is_none_or(|r| r.status != St::Committed),
            ClaimKind::SkippedDependency => row.is_some_and(|r| r.deps.iter().any(|d| !executed.contains(d))),
        }
    }

    fn finish(mut self) -> AuditReport {
        self.close_tick();
        self.line = 0;
        if !self.ended {
            self.flag("end", "trace has no End record");
        }
        let expected_sweeps = self.end_at / self.interval + 1;
        if self.sweep_ticks.len() as u64 != expected_sweeps {
            let got = self.sweep_ticks.len();
            self.flag("sweep", format!("{got} sweeps, expected {expected_sweeps}"));
        }
        for i in 0..self.txs.len() {
            let id = self.ids[i];
            let t = self.txs[i].clone();
            match t.status {
                St::Rejected(_) if !t.notified => {
                    self.flag("notification", format!("{id} rejected but never notified"))
                }
                St::Buffered => {
                    let deadline = t.tau.unwrap_or(0) + self.cfg.tau_max + self.interval;
                    if self.end_at >= deadline {
                        self.flag("termination", format!("{id} still buffered at end, deadline {deadline}"));
                    }
                }
                St::Committed => self.check_committed_closure(i),
                _ => {}
            }
        }
        for (rollup, deposited) in self.deposited.clone() {
            let staked = self.stake.get(&rollup).copied().unwrap_or(0);
            let slashed = self.slashed.get(&rollup).copied().unwrap_or(0);
            if staked + slashed != deposited {
                self.flag("conservation", format!("{rollup}: {staked} + {slashed} != {deposited}"));
            }
        }
        self.report
    }
}

/// Audits a complete trace. The first record must be `RunStarted`.
pub fn audit(trace: &Trace) -> AuditReport {
    let mut records = trace.iter();
    let Some(TraceRecord {
        event: TraceEvent::RunStarted { sweep_interval, end_at, rollups, clock_skews, config, .. },
        ..
    }) = records.next()
    else {
        return AuditReport {
            violations: vec![Violation {
                line: 1,
                tick: 0,
                rule: "header",
                detail: "trace must start with RunStarted".into(),
            }],
            records: trace.len(),
            ..AuditReport::default()
        };
    };
    let mut a = Auditor {
        cfg: config.clone(),
        interval: (*sweep_interval).max(1),
        end_at: *end_at,
        rollups: *rollups,
        skews: clock_skews.clone(),
        ids: Vec::new(),
        index: BTreeMap::new(),
        txs: Vec::new(),
        reach: None,
        stake: BTreeMap::new(),
        deposited: BTreeMap::new(),
        slashed: BTreeMap::new(),
        failed: BTreeMap::new(),
        executions: BTreeMap::new(),
        punished: BTreeSet::new(),
        last_report: None,
        in_sweep: false,
        sweep_ticks: BTreeSet::new(),
        sweep_snapshot: BTreeSet::new(),
        attempted: BTreeSet::new(),
        tick: 0,
        tick_commits: BTreeSet::new(),
        line: 1,
        report: AuditReport { records: trace.len(), ..AuditReport::default() },
        ended: false,
    };
    for (n, rec) in records.enumerate() {
        a.line = n + 2;
        a.step(rec);
    }
    a.finish()
}
