//! Throughput experiments in simulated time: the P sweep, the fault
//! timeline and the disk-log baseline.

use rayon::prelude::*;
use serde::Serialize;

use crate::ids::ProcessKind;
use crate::metrics::{MetricsSeries, WindowCounts};
use crate::scenario::Scenario;
use crate::simcore::{Fault, GlobalTime, SimError};
use crate::switch::Role;
use crate::trace::{TraceEvent, TraceLevel};
use crate::world::{self, World};

pub const SWEEP_HEADER: &str = "n_switches,P,flows_per_s,rsm_ops_per_s,cache_hit_rate";

/// Time excluded from throughput averages while the first primary is elected.
pub const WARMUP_US: u64 = 500_000;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("fault timeline needs {0}")]
    MissingFault(&'static str),
}

/// Base scenario for throughput runs: a fast LAN-like channel, sixteen
/// outstanding packet-ins per switch, no faults.
pub fn bench_base() -> Scenario {
    Scenario {
        duration: GlobalTime(2_500_000),
        delay_min_us: 50,
        delay_bound_us: 200,
        max_offset_us: 0,
        window: 16,
        trace_level: TraceLevel::Protocol,
        ..Scenario::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_switches: usize,
    pub p: f64,
    pub flows_per_s: f64,
    pub rsm_ops_per_s: f64,
    pub cache_hit_rate: f64,
    /// Packet-ins that drew the cache coin, over all repetitions.
    pub samples: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RunRates {
    pub flows_per_s: f64,
    pub rsm_ops_per_s: f64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

impl RunRates {
    pub fn hit_rate(&self) -> f64 {
        let n = self.cache_hits + self.cache_misses;
        if n == 0 { 0.0 } else { self.cache_hits as f64 / n as f64 }
    }
}

/// Rates over `[WARMUP_US, duration)`.
pub fn measure(w: &World) -> RunRates {
    let from = GlobalTime(WARMUP_US.min(w.scenario.duration.0 / 2));
    let c: WindowCounts = w.sim.kernel().metrics().totals_between(from, w.scenario.duration);
    let secs = (w.scenario.duration.0 - from.0) as f64 / 1e6;
    RunRates {
        flows_per_s: c.flows_completed as f64 / secs,
        rsm_ops_per_s: c.rsm_ops as f64 / secs,
        cache_hits: c.cache_hits,
        cache_misses: c.cache_misses,
    }
}

pub fn run_once(s: &Scenario) -> Result<RunRates, SimError> {
    Ok(measure(&world::run(s)?))
}

/// Runs every `(n_switches, P)` cell `repetitions` times (seeds
/// `base.seed..base.seed + repetitions`) and averages. Cells run in parallel.
pub fn run_throughput_sweep(switches: &[usize], p_values: &[f64], repetitions: u64, base: &Scenario) -> Result<Vec<SweepRow>, SimError> {
    let cells: Vec<(usize, f64, u64)> = switches
        .iter()
        .flat_map(|&n| p_values.iter().flat_map(move |&p| (0..repetitions.max(1)).map(move |r| (n, p, r))))
        .collect();
    let runs: Vec<RunRates> = cells
        .par_iter()
        .map(|&(n, p, r)| {
            let s = Scenario { n_switches: n, p_local: p, seed: base.seed + r, ..base.clone() };
            run_once(&s)
        })
        .collect::<Result<_, _>>()?;
    let reps = repetitions.max(1) as usize;
    Ok(cells
        .chunks(reps)
        .zip(runs.chunks(reps))
        .map(|(cell, rs)| {
            let k = rs.len() as f64;
            let hits: u64 = rs.iter().map(|r| r.cache_hits).sum();
            let total: u64 = rs.iter().map(|r| r.cache_hits + r.cache_misses).sum();
            SweepRow {
                n_switches: cell[0].0,
                p: cell[0].1,
                flows_per_s: rs.iter().map(|r| r.flows_per_s).sum::<f64>() / k,
                rsm_ops_per_s: rs.iter().map(|r| r.rsm_ops_per_s).sum::<f64>() / k,
                cache_hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
                samples: total,
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.1},{:.1},{:.4}\n", r.n_switches, r.p, r.flows_per_s, r.rsm_ops_per_s, r.cache_hit_rate));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FaultTimeline {
    pub series: MetricsSeries,
    pub controller_crash: GlobalTime,
    pub data_server_crash: GlobalTime,
    /// First switch acknowledging a new master after the controller crash.
    pub takeover: Option<GlobalTime>,
    /// Maximal zero-throughput runs after warm-up.
    pub zero_windows: Vec<(GlobalTime, GlobalTime)>,
}

impl FaultTimeline {
    /// Zero runs overlapping `[from, from + len)`.
    pub fn zero_windows_near(&self, from: GlobalTime, len: u64) -> Vec<(GlobalTime, GlobalTime)> {
        self.zero_windows.iter().copied().filter(|(a, b)| *b > from && a.0 < from.0 + len).collect()
    }
}

/// Runs a scenario containing a primary-controller crash and a data-server
/// crash and returns its windowed throughput.
pub fn run_fault_timeline(s: &Scenario) -> Result<FaultTimeline, BenchError> {
    let controller_crash = s
        .faults
        .iter()
        .find(|f| f.kind == Fault::Crash && f.target.is_none_or(|t| t.kind == ProcessKind::Controller))
        .map(|f| f.at)
        .ok_or(BenchError::MissingFault("a primary controller crash"))?;
    let data_server_crash = s
        .faults
        .iter()
        .find(|f| f.kind == Fault::Crash && f.target.is_some_and(|t| t.kind == ProcessKind::DataServer))
        .map(|f| f.at)
        .ok_or(BenchError::MissingFault("a data-server crash"))?;
    let w = world::run(s)?;
    let takeover = w.trace().iter().find_map(|r| match &r.event {
        TraceEvent::RoleChanged { role: Role::Master, .. } if r.global() > controller_crash => Some(r.global()),
        _ => None,
    });
    let series = w.metrics();
    let zero_windows = series.zero_windows(GlobalTime(WARMUP_US));
    Ok(FaultTimeline { series, controller_crash, data_server_crash, takeover, zero_windows })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiskLogResult {
    pub n_switches: usize,
    pub append_latency_us: u64,
    pub disk_log_flows_per_s: f64,
    pub store_flows_per_s: f64,
    /// Store throughput over disk-log throughput.
    pub ratio: f64,
}

/// One controller, no data store, every packet-in paying a synchronous
/// append of `append_latency_us`; compared against the replicated store at
/// P = 0 on the same switch count.
pub fn run_disk_log_baseline(n_switches: usize, append_latency_us: u64, base: &Scenario) -> Result<DiskLogResult, SimError> {
    let disk = Scenario {
        n_switches,
        n_controllers: 1,
        n_dataservers: 0,
        p_local: 0.0,
        disk_log_latency_us: Some(append_latency_us),
        faults: Vec::new(),
        ..base.clone()
    };
    let store = Scenario { n_switches, p_local: 0.0, faults: Vec::new(), ..base.clone() };
    let d = run_once(&disk)?.flows_per_s;
    let st = run_once(&store)?.flows_per_s;
    Ok(DiskLogResult {
        n_switches,
        append_latency_us,
        disk_log_flows_per_s: d,
        store_flows_per_s: st,
        ratio: if d > 0.0 { st / d } else { f64::INFINITY },
    })
}

/// `completed + lost + in_flight == sent` summed over switches.
pub fn conservation_holds(w: &World) -> bool {
    let st = w.switch_stats();
    let totals = w.sim.kernel().metrics().totals();
    st.completed + st.lost + w.in_flight() == st.sent
        && totals.flows_completed == st.completed
        && totals.packet_ins_sent == st.sent
}
