//! Offline trace analysis: safety, liveness, detection bound, replica
//! agreement, cache coherence and gate soundness.
//!
//! Everything here reads the trace only. Global timestamps come from the
//! trace records; local clocks are reconstructed from `clock_init` records.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::json;

use crate::datastore::{value_digest, DataStore};
use crate::ids::ProcessId;
use crate::rsm::{OrderedRequest, ReplicatedStore};
use crate::scenario::Scenario;
use crate::simcore::{Fault, GlobalTime, LocalClock, LocalTime};
use crate::trace::{TraceEvent, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check: &'static str,
    pub verdict: Verdict,
    pub details: serde_json::Value,
}

impl CheckResult {
    fn new(check: &'static str, verdict: Verdict, details: serde_json::Value) -> Self {
        CheckResult { check, verdict, details }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("unusable trace: {0} acts without a clock_init record")]
    MissingClock(ProcessId),
}

/// Global-time span during which a controller's primary predicate was
/// observed true for one lease value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PrimaryInterval {
    pub controller: ProcessId,
    pub my_lease: LocalTime,
    pub global_start: GlobalTime,
    pub global_end: GlobalTime,
}

fn clocks(trace: &[TraceRecord]) -> Result<BTreeMap<ProcessId, LocalClock>, CheckError> {
    let mut out = BTreeMap::new();
    for r in trace {
        match (&r.event, r.process) {
            (TraceEvent::ClockInit { rate_ppb, offset_us }, Some(p)) => {
                out.insert(p, LocalClock::new(p, *rate_ppb, *offset_us));
            }
            (_, Some(p)) if !out.contains_key(&p) => return Err(CheckError::MissingClock(p)),
            _ => {}
        }
    }
    Ok(out)
}

/// Closes the recorded predicate samples into intervals, one per
/// (controller, incarnation, lease value).
pub fn primary_intervals(trace: &[TraceRecord]) -> Vec<PrimaryInterval> {
    let mut incarnation: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut spans: BTreeMap<(ProcessId, u64, LocalTime), (GlobalTime, GlobalTime)> = BTreeMap::new();
    for r in trace {
        let Some(p) = r.process else { continue };
        match &r.event {
            TraceEvent::Recover => *incarnation.entry(p).or_default() += 1,
            TraceEvent::PrimaryCheck { primary: true, my_lease, .. } => {
                let inc = incarnation.get(&p).copied().unwrap_or(0);
                let g = r.global();
                spans.entry((p, inc, *my_lease)).and_modify(|s| s.1 = g).or_insert((g, g));
            }
            _ => {}
        }
    }
    let mut v: Vec<PrimaryInterval> = spans
        .into_iter()
        .map(|((controller, _, my_lease), (global_start, global_end))| PrimaryInterval { controller, my_lease, global_start, global_end })
        .collect();
    v.sort_by_key(|i| (i.global_start, i.controller));
    v
}

/// Two closed intervals of distinct controllers that share an instant.
pub fn overlapping_pairs(intervals: &[PrimaryInterval]) -> Vec<(PrimaryInterval, PrimaryInterval)> {
    let mut out = Vec::new();
    // Sorted by start; keep the furthest-reaching interval per controller.
    let mut reach: BTreeMap<ProcessId, PrimaryInterval> = BTreeMap::new();
    for i in intervals {
        for (c, prev) in &reach {
            if *c != i.controller && prev.global_end >= i.global_start {
                out.push((*prev, *i));
            }
        }
        let e = reach.entry(i.controller).or_insert(*i);
        if i.global_end >= e.global_end {
            *e = *i;
        }
    }
    out
}

/// At most one controller is primary at any global instant.
pub fn check_safety(trace: &[TraceRecord]) -> Result<CheckResult, CheckError> {
    clocks(trace)?;
    let intervals = primary_intervals(trace);
    let overlaps = overlapping_pairs(&intervals);
    let verdict = if overlaps.is_empty() { Verdict::Pass } else { Verdict::Fail };
    Ok(CheckResult::new(
        "safety",
        verdict,
        json!({ "intervals": intervals.len(), "overlaps": overlaps.len(), "witnesses": overlaps.iter().take(3).collect::<Vec<_>>() }),
    ))
}

/// Every recorded predicate value matches `my_lease > clock` recomputed from
/// the last grant seen in the trace.
pub fn check_gate_soundness(trace: &[TraceRecord], inclusive: bool) -> CheckResult {
    let mut lease: BTreeMap<ProcessId, LocalTime> = BTreeMap::new();
    let mut bad = Vec::new();
    for r in trace {
        let Some(p) = r.process else { continue };
        match &r.event {
            TraceEvent::Recover => {
                lease.insert(p, LocalTime::ZERO);
            }
            TraceEvent::LeaseGranted { my_lease, .. } => {
                lease.insert(p, *my_lease);
            }
            TraceEvent::PrimaryCheck { primary, my_lease, action, .. } => {
                let known = lease.get(&p).copied().unwrap_or(LocalTime::ZERO);
                let now = r.local();
                let expect = if inclusive { known >= now } else { known > now };
                if known != *my_lease || expect != *primary {
                    bad.push(json!({ "controller": p, "global_time_us": r.global_time_us, "action": action }));
                }
            }
            _ => {}
        }
    }
    let verdict = if bad.is_empty() { Verdict::Pass } else { Verdict::Fail };
    CheckResult::new("gate_soundness", verdict, json!({ "mismatches": bad.len(), "witnesses": bad.into_iter().take(3).collect::<Vec<_>>() }))
}

/// Lease values requested by each controller, in tick order.
pub fn lease_sequences(trace: &[TraceRecord]) -> BTreeMap<ProcessId, Vec<u64>> {
    let mut out: BTreeMap<ProcessId, Vec<u64>> = BTreeMap::new();
    for r in trace {
        if let (TraceEvent::TickStart { lease_us }, Some(p)) = (&r.event, r.process) {
            let v = out.entry(p).or_default();
            if v.last() != Some(lease_us) {
                v.push(*lease_us);
            }
        }
    }
    out
}

struct Liveness {
    stable_from: GlobalTime,
    live_controllers: usize,
    live_data_servers: usize,
}

/// Which processes are correct at the end of the run, and when faults
/// stopped. A data server is faulty until its recovery completes.
fn liveness_setting(trace: &[TraceRecord], s: &Scenario) -> Liveness {
    let mut down = BTreeSet::new();
    let mut last = GlobalTime::ZERO;
    for r in trace {
        match (&r.event, r.process) {
            (TraceEvent::Crash, Some(p)) => {
                down.insert(p);
                last = last.max(r.global());
            }
            (TraceEvent::Recover, Some(p)) => {
                down.remove(&p);
                last = last.max(r.global());
            }
            (TraceEvent::PartitionStart { .. } | TraceEvent::PartitionEnd, _) => last = last.max(r.global()),
            (TraceEvent::RecoveryStart, Some(p)) => {
                down.insert(p);
            }
            (TraceEvent::RecoveryDone { .. }, Some(p)) => {
                down.remove(&p);
                last = last.max(r.global());
            }
            _ => {}
        }
    }
    Liveness {
        stable_from: last.max(s.gst),
        live_controllers: s.controllers().iter().filter(|c| !down.contains(*c)).count(),
        live_data_servers: s.data_servers().iter().filter(|d| !down.contains(*d)).count(),
    }
}

/// Some controller is primary after the system has stabilized.
pub fn check_liveness(trace: &[TraceRecord], s: &Scenario) -> CheckResult {
    let l = liveness_setting(trace, s);
    let seqs = lease_sequences(trace);
    let base = json!({ "stable_from_us": l.stable_from.0, "lease_sequences": seqs });
    if l.live_controllers == 0 || l.live_data_servers <= s.n_dataservers / 2 {
        return CheckResult::new("liveness", Verdict::NotApplicable, base);
    }
    let elected = trace.iter().find(|r| r.global() >= l.stable_from && matches!(r.event, TraceEvent::PrimaryCheck { primary: true, .. }));
    let mut details = base;
    details["elected_at_us"] = json!(elected.map(|r| r.global_time_us));
    CheckResult::new("liveness", if elected.is_some() { Verdict::Pass } else { Verdict::Fail }, details)
}

/// Every recorded doubling doubles, and the values a controller requests
/// within one incarnation only ever grow by doubling.
pub fn lease_growth_is_geometric(trace: &[TraceRecord], initial_us: u64) -> bool {
    let mut current: BTreeMap<ProcessId, u64> = BTreeMap::new();
    for r in trace {
        let Some(p) = r.process else { continue };
        match &r.event {
            TraceEvent::Recover => {
                current.remove(&p);
            }
            TraceEvent::TickStart { lease_us } => {
                let prev = current.insert(p, *lease_us).unwrap_or(initial_us);
                if *lease_us != prev && *lease_us != 2 * prev {
                    return false;
                }
            }
            TraceEvent::LeaseDoubled { from_us, to_us } if *to_us != 2 * from_us => return false,
            _ => {}
        }
    }
    true
}

/// L doubles right after a grant whose lease had already run out on the
/// controller's clock, and at no other point.
pub fn check_lease_doubling(trace: &[TraceRecord]) -> CheckResult {
    let mut bad = Vec::new();
    let mut grants = 0u64;
    let mut doublings = 0u64;
    let mut expired_grant: BTreeMap<ProcessId, bool> = BTreeMap::new();
    for r in trace {
        let Some(p) = r.process else { continue };
        match &r.event {
            TraceEvent::LeaseGranted { my_lease, .. } => {
                grants += 1;
                if expired_grant.insert(p, *my_lease < r.local()) == Some(true) {
                    bad.push(json!({ "controller": p, "at_us": r.global_time_us, "problem": "expired grant without doubling" }));
                }
            }
            TraceEvent::LeaseDoubled { .. } => {
                doublings += 1;
                if expired_grant.remove(&p) != Some(true) {
                    bad.push(json!({ "controller": p, "at_us": r.global_time_us, "problem": "doubling without expired grant" }));
                }
            }
            TraceEvent::PrimaryCheck { .. } | TraceEvent::Crash
                if expired_grant.remove(&p) == Some(true) => {
                    bad.push(json!({ "controller": p, "at_us": r.global_time_us, "problem": "expired grant without doubling" }));
                }
            _ => {}
        }
    }
    let verdict = if bad.is_empty() { Verdict::Pass } else { Verdict::Fail };
    CheckResult::new("lease_doubling", verdict, json!({ "grants": grants, "doublings": doublings, "witnesses": bad.into_iter().take(3).collect::<Vec<_>>() }))
}

/// Allowance on top of `L + Δ` for message delays and the commit round.
pub fn detection_slack_us(s: &Scenario) -> u64 {
    2 * s.delay_bound_us + 3 * s.delay_bound_us + s.store_cost_us
}

/// After a post-GST crash of the lease holder, another controller gets a
/// store-side grant within `L + Δ + slack`.
pub fn check_detection_bound(trace: &[TraceRecord], s: &Scenario) -> CheckResult {
    let slack = detection_slack_us(s);
    let mut holder: Option<ProcessId> = None;
    let mut lease_of: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut cases = Vec::new();
    let mut failed = false;
    let mut partitioned = false;
    let mut down: BTreeSet<ProcessId> = BTreeSet::new();
    for (i, r) in trace.iter().enumerate() {
        match (&r.event, r.process) {
            (TraceEvent::Crash, Some(p)) => {
                down.insert(p);
            }
            (TraceEvent::Recover, Some(p)) => {
                down.remove(&p);
            }
            _ => {}
        }
        match (&r.event, r.process) {
            (TraceEvent::PartitionStart { .. }, _) => partitioned = true,
            (TraceEvent::PartitionEnd, _) => partitioned = false,
            (TraceEvent::LeaseGrant { to, .. }, _) => holder = Some(*to),
            (TraceEvent::TickStart { lease_us }, Some(p)) => {
                lease_of.insert(p, *lease_us);
            }
            (TraceEvent::Crash, Some(p)) if Some(p) == holder && r.global() >= s.gst => {
                let l = lease_of.get(&p).copied().unwrap_or(s.lease_us);
                let deadline = r.global() + l + s.delta_us + slack;
                let disturbed = trace[i + 1..]
                    .iter()
                    .take_while(|x| x.global() <= deadline)
                    .any(|x| matches!(x.event, TraceEvent::Crash | TraceEvent::PartitionStart { .. } | TraceEvent::Recover));
                let successor = s.controllers().iter().any(|c| !down.contains(c));
                let store_up = s.data_servers().iter().filter(|d| !down.contains(*d)).count() > s.n_dataservers / 2;
                if !successor || !store_up || partitioned || disturbed || deadline > s.duration {
                    continue;
                }
                let grant = trace[i + 1..]
                    .iter()
                    .take_while(|x| x.global() <= deadline)
                    .find_map(|x| match x.event {
                        TraceEvent::LeaseGrant { to, .. } if to != p => Some(x.global()),
                        _ => None,
                    });
                failed |= grant.is_none();
                cases.push(json!({
                    "crashed": p,
                    "crash_us": r.global_time_us,
                    "deadline_us": deadline.0,
                    "grant_us": grant.map(|g| g.0),
                    "takeover_us": grant.map(|g| g.0 - r.global_time_us),
                }));
            }
            _ => {}
        }
    }
    let verdict = match (cases.is_empty(), failed) {
        (true, _) => Verdict::NotApplicable,
        (false, true) => Verdict::Fail,
        (false, false) => Verdict::Pass,
    };
    CheckResult::new("detection_bound", verdict, json!({ "slack_us": slack, "cases": cases }))
}

/// The committed log as seen by successive RSM leaders, with the global
/// instant each slot was first committed. `Err` names a slot two leaders
/// disagree on, or the first missing slot.
pub fn committed_log(trace: &[TraceRecord]) -> Result<Vec<(GlobalTime, OrderedRequest)>, String> {
    let mut slots: BTreeMap<u64, (GlobalTime, OrderedRequest)> = BTreeMap::new();
    for r in trace {
        if let TraceEvent::Committed { slot, request } = &r.event {
            match slots.get(slot) {
                Some((_, prev)) if prev != request => return Err(format!("slot {slot} committed twice with different requests")),
                Some(_) => {}
                None => {
                    slots.insert(*slot, (r.global(), request.clone()));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(slots.len());
    for (i, (slot, entry)) in slots.into_iter().enumerate() {
        if slot != i as u64 {
            return Err(format!("slot {i} missing from the committed log"));
        }
        out.push(entry);
    }
    Ok(out)
}

fn fresh_store(s: &Scenario) -> ReplicatedStore {
    ReplicatedStore::new(DataStore::new(true).with_inclusive_guard(s.mutations.inclusive_boundaries))
}

/// All live replicas in normal status hold the state obtained by replaying
/// the committed log up to their applied index.
pub fn check_agreement(trace: &[TraceRecord], s: &Scenario) -> CheckResult {
    let log = match committed_log(trace) {
        Ok(l) => l,
        Err(e) => return CheckResult::new("agreement", Verdict::Fail, json!({ "error": e })),
    };
    let mut store = fresh_store(s);
    let mut digests = vec![store.state_digest()];
    for (_, req) in &log {
        store.apply(req);
        digests.push(store.state_digest());
    }
    let mut replicas = Vec::new();
    let mut bad = Vec::new();
    for r in trace {
        if let (TraceEvent::ReplicaSummary { status, applied, state_digest, .. }, Some(p)) = (&r.event, r.process) {
            if status != "normal" {
                continue;
            }
            let expect = digests.get(*applied as usize).copied();
            replicas.push(json!({ "replica": p, "applied": applied, "digest": format!("{state_digest:016x}") }));
            if expect != Some(*state_digest) {
                bad.push(json!({ "replica": p, "applied": applied }));
            }
        }
    }
    let digests_at_end: BTreeSet<u64> = trace
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::ReplicaSummary { status, applied, state_digest, .. } if status == "normal" && *applied as usize == log.len() => {
                Some(*state_digest)
            }
            _ => None,
        })
        .collect();
    let verdict = if bad.is_empty() && digests_at_end.len() <= 1 { Verdict::Pass } else { Verdict::Fail };
    CheckResult::new(
        "agreement",
        verdict,
        json!({ "committed": log.len(), "replicas": replicas, "mismatches": bad, "final_digest": format!("{:016x}", digests[log.len()]) }),
    )
}

/// Every cache hit returned the value the committed store state held at
/// that instant.
pub fn check_cache_coherence(trace: &[TraceRecord], s: &Scenario) -> CheckResult {
    let log = match committed_log(trace) {
        Ok(l) => l,
        Err(e) => return CheckResult::new("cache_coherence", Verdict::Fail, json!({ "error": e })),
    };
    let mut store = fresh_store(s);
    let mut next = 0usize;
    let mut hits = 0u64;
    let mut stale = Vec::new();
    for r in trace {
        if let (TraceEvent::CacheHit { table, key, value_digest: got }, Some(p)) = (&r.event, r.process) {
            while next < log.len() && log[next].0 <= r.global() {
                store.apply(&log[next].1);
                next += 1;
            }
            hits += 1;
            let want = value_digest(store.store.kv.get(table, key).map(|v| v.as_slice()));
            if want != *got {
                stale.push(json!({ "controller": p, "global_time_us": r.global_time_us, "table": table, "key": String::from_utf8_lossy(key) }));
            }
        }
    }
    let verdict = if stale.is_empty() { Verdict::Pass } else { Verdict::Fail };
    CheckResult::new("cache_coherence", verdict, json!({ "hits": hits, "stale_reads": stale.len(), "witnesses": stale.into_iter().take(3).collect::<Vec<_>>() }))
}

/// A crashed process records nothing until it recovers.
pub fn check_crash_silence(trace: &[TraceRecord]) -> CheckResult {
    let mut down = BTreeSet::new();
    let mut bad = 0u64;
    for r in trace {
        let Some(p) = r.process else { continue };
        match r.event {
            TraceEvent::Crash => {
                down.insert(p);
            }
            TraceEvent::Recover => {
                down.remove(&p);
            }
            _ if down.contains(&p) => bad += 1,
            _ => {}
        }
    }
    CheckResult::new("crash_silence", if bad == 0 { Verdict::Pass } else { Verdict::Fail }, json!({ "events_while_crashed": bad }))
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }

    /// One JSON object per check.
    pub fn to_jsonl(&self) -> String {
        self.checks.iter().map(|c| serde_json::to_string(c).expect("report serializes") + "\n").collect()
    }
}

pub fn check_all(trace: &[TraceRecord], s: &Scenario) -> Result<Report, CheckError> {
    Ok(Report {
        seed: s.seed,
        checks: vec![
            check_safety(trace)?,
            check_gate_soundness(trace, s.mutations.inclusive_boundaries),
            check_liveness(trace, s),
            check_lease_doubling(trace),
            check_detection_bound(trace, s),
            check_agreement(trace, s),
            check_cache_coherence(trace, s),
            check_crash_silence(trace),
        ],
    })
}

/// Partition faults in the schedule; used to decide what a run can show.
pub fn has_partitions(s: &Scenario) -> bool {
    s.faults.iter().any(|f| matches!(f.kind, Fault::PartitionStart { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(g: u64, p: ProcessId, event: TraceEvent) -> TraceRecord {
        TraceRecord { global_time_us: g, local_time_us: g, process: Some(p), event }
    }

    fn check(g: u64, p: ProcessId, primary: bool, lease: u64) -> TraceRecord {
        rec(g, p, TraceEvent::PrimaryCheck { action: "x".into(), target: None, primary, my_lease: LocalTime(lease) })
    }

    fn init(p: ProcessId) -> TraceRecord {
        rec(0, p, TraceEvent::ClockInit { rate_ppb: 0, offset_us: 0 })
    }

    #[test]
    fn single_controller_is_safe() {
        let c = ProcessId::controller(0);
        let t = vec![init(c), check(1, c, true, 10), check(5, c, true, 10), check(9, c, true, 20)];
        assert_eq!(check_safety(&t).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn disjoint_and_touching_intervals() {
        let (a, b) = (ProcessId::controller(0), ProcessId::controller(1));
        let base = vec![init(a), init(b), check(1, a, true, 10), check(9, a, true, 10)];
        let mut ok = base.clone();
        ok.extend([check(10, b, true, 30), check(20, b, true, 30)]);
        assert_eq!(check_safety(&ok).unwrap().verdict, Verdict::Pass);
        let mut touch = base;
        touch.extend([check(9, b, true, 30)]);
        let r = check_safety(&touch).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.details["overlaps"], 1);
    }

    #[test]
    fn false_samples_do_not_count() {
        let (a, b) = (ProcessId::controller(0), ProcessId::controller(1));
        let t = vec![init(a), init(b), check(1, a, true, 10), check(5, b, false, 0), check(9, a, true, 10)];
        assert_eq!(check_safety(&t).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn missing_clock_is_unusable() {
        let c = ProcessId::controller(0);
        assert_eq!(check_safety(&[check(1, c, true, 10)]).unwrap_err(), CheckError::MissingClock(c));
    }

    #[test]
    fn gate_soundness_recomputes_the_predicate() {
        let c = ProcessId::controller(0);
        let grant = rec(1, c, TraceEvent::LeaseGranted {
            start: LocalTime(0),
            my_lease: LocalTime(10),
            lease_us: 10,
            ltime_echo: LocalTime(0),
            slot: 0,
        });
        let good = vec![init(c), grant.clone(), check(5, c, true, 10), check(10, c, false, 10)];
        assert_eq!(check_gate_soundness(&good, false).verdict, Verdict::Pass);
        let bad = vec![init(c), grant, check(10, c, true, 10)];
        assert_eq!(check_gate_soundness(&bad, false).verdict, Verdict::Fail);
        assert_eq!(check_gate_soundness(&bad, true).verdict, Verdict::Pass);
    }

    #[test]
    fn geometric_growth() {
        let c = ProcessId::controller(0);
        let tick = |g, l| rec(g, c, TraceEvent::TickStart { lease_us: l });
        assert!(lease_growth_is_geometric(&[tick(0, 10), tick(1, 20), tick(2, 40), tick(3, 40)], 10));
        assert!(!lease_growth_is_geometric(&[tick(0, 10), tick(1, 30)], 10));
    }
}
