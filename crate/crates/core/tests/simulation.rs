//! Whole-system runs: determinism, replication under faults, scenario
//! parsing and the throughput bookkeeping.

use ftsdn::bench;
use ftsdn::checker::{self, Verdict};
use ftsdn::ids::ProcessId;
use ftsdn::scenario::{FaultAction, RandomSpec, Scenario};
use ftsdn::simcore::{Fault, GlobalTime, LocalClock, PPB};
use ftsdn::trace::{self, TraceEvent};
use ftsdn::world;
use proptest::prelude::*;

fn small(seed: u64) -> Scenario {
    Scenario {
        seed,
        duration: GlobalTime(6_000_000),
        n_switches: 2,
        n_controllers: 2,
        n_dataservers: 3,
        delta_us: 250_000,
        lease_us: 500_000,
        ..Scenario::default()
    }
}

fn crash(at: u64, p: ProcessId) -> FaultAction {
    FaultAction { at: GlobalTime(at), target: Some(p), kind: Fault::Crash }
}

fn recover(at: u64, p: ProcessId) -> FaultAction {
    FaultAction { at: GlobalTime(at), target: Some(p), kind: Fault::Recover }
}

fn jsonl(s: &Scenario) -> Vec<u8> {
    let w = world::run(s).unwrap();
    let mut out = Vec::new();
    trace::write_jsonl(w.trace(), &mut out).unwrap();
    out
}

fn assert_checks_pass(s: &Scenario) -> world::World {
    let w = world::run(s).unwrap();
    let r = checker::check_all(w.trace(), s).unwrap();
    for c in &r.checks {
        assert_ne!(c.verdict, Verdict::Fail, "{}: {}", c.check, c.details);
    }
    w
}

#[test]
fn same_scenario_same_trace_bytes() {
    let s = RandomSpec::default().generate(17);
    assert_eq!(jsonl(&s), jsonl(&s));
    let other = RandomSpec::default().generate(18);
    assert_ne!(jsonl(&s), jsonl(&other));
}

#[test]
fn leader_crash_and_recovery_keep_replicas_in_agreement() {
    let d0 = ProcessId::data_server(0);
    let s = Scenario { faults: vec![crash(2_000_000, d0), recover(3_500_000, d0)], ..small(3) };
    let w = assert_checks_pass(&s);
    let kinds: Vec<&str> = w.trace().iter().map(|r| r.event.kind()).collect();
    assert!(kinds.contains(&"new_view"));
    assert!(kinds.contains(&"recovery_done"));
    let r = checker::check_agreement(w.trace(), &s);
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.details["replicas"].as_array().unwrap().len(), 3);
}

#[test]
fn follower_outage_is_caught_up() {
    let d2 = ProcessId::data_server(2);
    let s = Scenario { faults: vec![crash(1_000_000, d2), recover(4_000_000, d2)], ..small(4) };
    let w = assert_checks_pass(&s);
    let applied: Vec<u64> = w
        .trace()
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::ReplicaSummary { applied, .. } => Some(*applied),
            _ => None,
        })
        .collect();
    assert_eq!(applied.len(), 3);
    // The recovered follower finishes within one catch-up batch of the others.
    let max = *applied.iter().max().unwrap();
    assert!(applied.iter().all(|a| max - a <= 256), "{applied:?}");
}

#[test]
fn committed_requests_are_unique_and_were_submitted() {
    let s = RandomSpec::default().generate(5);
    let w = world::run(&s).unwrap();
    let log = checker::committed_log(w.trace()).unwrap();
    assert!(!log.is_empty());
    let mut seen = std::collections::BTreeSet::new();
    let stamped: std::collections::BTreeSet<(ProcessId, u64)> = w
        .trace()
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Stamped { client, req_id, .. } => Some((*client, *req_id)),
            _ => None,
        })
        .collect();
    for (_, req) in &log {
        assert!(seen.insert((req.client, req.req_id, req.ltime)), "applied twice: {req:?}");
        assert!(stamped.contains(&(req.client, req.req_id)), "never submitted: {req:?}");
    }
}

/// Two of three data servers restarting together cannot rebuild a majority
/// of normal replicas: the store stops, and nothing unsafe happens meanwhile.
#[test]
fn majority_loss_stalls_safely() {
    let (d1, d2) = (ProcessId::data_server(1), ProcessId::data_server(2));
    let s = Scenario {
        faults: vec![crash(2_000_000, d1), crash(2_000_000, d2), recover(3_000_000, d1), recover(3_000_000, d2)],
        ..small(6)
    };
    let (_, warnings) = Scenario::parse(&s.to_toml()).unwrap();
    assert!(!warnings.is_empty());
    let w = assert_checks_pass(&s);
    let m = w.metrics();
    let before = m.points.iter().filter(|p| p.start_us < 2_000_000).map(|p| p.counts.flows_completed).sum::<u64>();
    let after = m.points.iter().filter(|p| p.start_us >= 3_000_000).map(|p| p.counts.flows_completed).sum::<u64>();
    assert!(before > 0);
    assert_eq!(after, 0);
}

#[test]
fn demoted_controller_never_serves_old_cache() {
    let s = Scenario {
        app: ftsdn::scenario::AppKind::Counter { keys: 2 },
        faults: vec![
            FaultAction {
                at: GlobalTime(2_000_000),
                target: None,
                kind: Fault::PartitionStart { groups: vec![
                    vec![ProcessId::controller(0)],
                    vec![ProcessId::controller(1), ProcessId::data_server(0), ProcessId::data_server(1), ProcessId::data_server(2)],
                ] },
            },
            FaultAction { at: GlobalTime(4_000_000), target: None, kind: Fault::PartitionEnd },
        ],
        ..small(7)
    };
    let c0 = ProcessId::controller(0);
    let mut w = world::World::build(&s).unwrap();
    w.sim.run_until(Some(GlobalTime(1_900_000))).unwrap();
    assert_eq!(w.current_primary(), Some(c0));
    w.sim.run_until(Some(GlobalTime(3_900_000))).unwrap();
    assert_eq!(w.current_primary(), Some(ProcessId::controller(1)));
    w.sim.run_until(Some(s.duration)).unwrap();
    w.sim.finish();
    // No entry cached before the partition is served afterwards without an
    // intervening cold start.
    let mut cold_since_partition = false;
    for r in w.trace().iter().filter(|r| r.process == Some(c0) && r.global() >= GlobalTime(2_000_000)) {
        match r.event {
            TraceEvent::CacheCold => cold_since_partition = true,
            TraceEvent::CacheHit { .. } => assert!(cold_since_partition, "warm hit at {}", r.global()),
            _ => {}
        }
    }
    let r = checker::check_all(w.trace(), &s).unwrap();
    assert!(r.checks.iter().all(|c| c.verdict != Verdict::Fail), "{}", r.to_jsonl());
}

#[test]
fn bench_flows_are_conserved() {
    for s in [bench::bench_base(), small(8), RandomSpec::default().generate(9)] {
        let w = world::run(&s).unwrap();
        assert!(bench::conservation_holds(&w), "seed {}", s.seed);
    }
}

#[test]
fn fault_timeline_needs_both_crashes() {
    let s = small(1);
    assert!(matches!(bench::run_fault_timeline(&s), Err(bench::BenchError::MissingFault(_))));
}

#[test]
fn disk_log_rate_is_bounded_by_append_latency() {
    for lat in [2_000u64, 5_000] {
        let r = bench::run_disk_log_baseline(4, lat, &bench::bench_base()).unwrap();
        let ceiling = 1e6 / lat as f64;
        // One completion may land on the closing window edge.
        assert!(r.disk_log_flows_per_s <= ceiling + 1.0, "{r:?}");
        assert!(r.disk_log_flows_per_s >= 0.9 * ceiling, "{r:?}");
    }
    let r = bench::run_disk_log_baseline(4, 0, &bench::bench_base()).unwrap();
    let local = 1e6 / bench::bench_base().local_cost_us as f64;
    assert!(r.disk_log_flows_per_s >= 0.9 * local && r.disk_log_flows_per_s <= local + 1.0, "{r:?}");
}

#[test]
fn checker_is_read_only() {
    let s = RandomSpec::default().generate(11);
    let w = world::run(&s).unwrap();
    let a = checker::check_all(w.trace(), &s).unwrap().to_jsonl();
    let b = checker::check_all(w.trace(), &s).unwrap().to_jsonl();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_stays_within_bound(rate in -1_000_000i64..=1_000_000, offset in 0u64..2_000_000, t1 in 0u64..1u64 << 40, dt in 0u64..1u64 << 36) {
        let c = LocalClock::new(ProcessId::controller(0), rate, offset);
        let (a, b) = (c.read(GlobalTime(t1)), c.read(GlobalTime(t1 + dt)));
        prop_assert!(b >= a);
        let elapsed = (b.0 - a.0) as f64;
        let bound = rate.unsigned_abs() as f64 / PPB as f64 * dt as f64;
        // One microsecond of rounding on each reading.
        prop_assert!((elapsed - dt as f64).abs() <= bound + 2.0);
    }

    #[test]
    fn scenario_text_round_trips(seed in 0u64..10_000) {
        let s = RandomSpec::default().generate(seed);
        let (back, _) = Scenario::parse(&s.to_toml()).unwrap();
        prop_assert_eq!(back, Scenario { mutations: Default::default(), ..s });
    }

    /// Corrupting any single line of a valid file either still parses or
    /// yields an error naming a line of the file; it never panics.
    #[test]
    fn scenario_errors_name_a_line(line in 0usize..40, junk in "[a-z_=\\[\\]\" 0-9.]{0,12}") {
        let text = include_str!("../scenarios/fault_timeline.toml");
        let mut lines: Vec<&str> = text.lines().collect();
        let n = lines.len();
        lines[line % n] = &junk;
        let edited = lines.join("\n");
        if let Err(e) = Scenario::parse(&edited) {
            match e {
                ftsdn::scenario::ScenarioError::Invalid { line, .. } => prop_assert!(line >= 1 && line <= n + 1),
                other => prop_assert!(false, "unexpected {other}"),
            }
        }
    }

    #[test]
    fn short_random_runs_pass_every_check(seed in 2_000u64..3_000) {
        let s = RandomSpec::default().generate(seed);
        let w = world::run(&s).unwrap();
        let r = checker::check_all(w.trace(), &s).unwrap();
        for c in &r.checks {
            prop_assert_ne!(c.verdict, Verdict::Fail, "{}: {}", c.check, c.details);
        }
        prop_assert!(bench::conservation_holds(&w));
    }
}
