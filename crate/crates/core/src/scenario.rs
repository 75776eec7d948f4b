//! Scenario files: process counts, clocks, channel, workload, protocol
//! parameters and the fault schedule.
//!
//! The format is TOML. The first non-blank line must be the header
//! `format = "ftsdn-scenario/1"`. Durations are strings with a unit suffix
//! (`"250us"`, `"2.5ms"`, `"1s"`). See `scenarios/default.toml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

use crate::controller::Mutations;
use crate::ids::{ProcessId, ProcessKind};
use crate::simcore::{ChannelModel, Fault, GlobalTime};
use crate::trace::TraceLevel;

pub const FORMAT: &str = "ftsdn-scenario/1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppKind {
    None,
    Counter { keys: u8 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultAction {
    pub at: GlobalTime,
    /// Empty for partition actions, and for a crash of whichever controller
    /// holds the lease at `at` (`kind = "crash_primary"`).
    pub target: Option<ProcessId>,
    pub kind: Fault,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration: GlobalTime,
    pub gst: GlobalTime,
    pub n_switches: usize,
    pub n_controllers: usize,
    pub n_dataservers: usize,
    pub delta_us: u64,
    pub lease_us: u64,
    pub p_local: f64,
    pub payload_size: usize,
    pub drift_bound: f64,
    pub max_offset_us: u64,
    pub delay_min_us: u64,
    pub delay_bound_us: u64,
    pub max_delay_before_gst_us: u64,
    pub drop_probability_before_gst: f64,
    pub window: usize,
    pub think_us: u64,
    pub buffer_capacity: usize,
    pub reset_roles_on_recover: bool,
    pub local_cost_us: u64,
    pub store_cost_us: u64,
    pub app: AppKind,
    pub faults: Vec<FaultAction>,
    /// Not part of the file format; set by tests and benches.
    pub mutations: Mutations,
    pub disk_log_latency_us: Option<u64>,
    pub trace_level: TraceLevel,
    pub metrics_window_us: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            duration: GlobalTime(20_000_000),
            gst: GlobalTime::ZERO,
            n_switches: 10,
            n_controllers: 2,
            n_dataservers: 3,
            delta_us: 500_000,
            lease_us: 1_000_000,
            p_local: 0.0,
            payload_size: crate::datastore::DEFAULT_PAYLOAD_SIZE,
            drift_bound: 1e-4,
            max_offset_us: 1_000_000,
            delay_min_us: 2_500,
            delay_bound_us: 10_000,
            max_delay_before_gst_us: 100_000,
            drop_probability_before_gst: 0.0,
            window: 1,
            think_us: 0,
            buffer_capacity: 1024,
            reset_roles_on_recover: false,
            local_cost_us: 10,
            store_cost_us: 260,
            app: AppKind::None,
            faults: Vec::new(),
            mutations: Mutations::default(),
            disk_log_latency_us: None,
            trace_level: TraceLevel::Actions,
            metrics_window_us: 100_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub line: usize,
    pub msg: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    format: Spanned<String>,
    seed: Option<u64>,
    duration: Option<Spanned<String>>,
    gst: Option<Spanned<String>>,
    #[serde(default)]
    processes: RawProcesses,
    #[serde(default)]
    protocol: RawProtocol,
    #[serde(default)]
    clocks: RawClocks,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    workload: RawWorkload,
    #[serde(default)]
    fault: Vec<Spanned<RawFault>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProcesses {
    switches: Option<Spanned<usize>>,
    controllers: Option<Spanned<usize>>,
    data_servers: Option<Spanned<usize>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    delta: Option<Spanned<String>>,
    lease: Option<Spanned<String>>,
    p_local: Option<Spanned<f64>>,
    payload_size: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawClocks {
    drift_bound: Option<Spanned<f64>>,
    max_offset: Option<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    delay_min: Option<Spanned<String>>,
    delay_bound: Option<Spanned<String>>,
    max_delay_before_gst: Option<Spanned<String>>,
    drop_probability_before_gst: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    window: Option<usize>,
    think: Option<Spanned<String>>,
    buffer_capacity: Option<usize>,
    reset_roles_on_recover: Option<bool>,
    local_cost: Option<Spanned<String>>,
    store_cost: Option<Spanned<String>>,
    app: Option<Spanned<String>>,
    app_keys: Option<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    at: Spanned<String>,
    kind: Spanned<String>,
    target: Option<Spanned<String>>,
    groups: Option<Vec<Vec<String>>>,
}

/// Parses `"1.5s"`, `"500ms"`, `"250us"` into microseconds.
pub fn parse_duration(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).ok_or_else(|| format!("duration {s:?} has no unit (us, ms, s)"))?;
    let (num, unit) = s.split_at(split);
    let v: f64 = num.parse().map_err(|_| format!("bad number in duration {s:?}"))?;
    let scale = match unit.trim() {
        "us" => 1.0,
        "ms" => 1e3,
        "s" => 1e6,
        u => return Err(format!("unknown duration unit {u:?} (us, ms, s)")),
    };
    let us = v * scale;
    if us.fract().abs() > 1e-6 {
        return Err(format!("duration {s:?} is not a whole number of microseconds"));
    }
    Ok(us.round() as u64)
}

pub fn format_duration(us: u64) -> String {
    if us.is_multiple_of(1_000_000) {
        format!("{}s", us / 1_000_000)
    } else if us.is_multiple_of(1_000) {
        format!("{}ms", us / 1_000)
    } else {
        format!("{us}us")
    }
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, offset: usize) -> usize {
        self.0[..offset.min(self.0.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, span: std::ops::Range<usize>, msg: impl Into<String>) -> Result<T, ScenarioError> {
        Err(ScenarioError::Invalid { line: self.of(span.start), msg: msg.into() })
    }

    fn dur(&self, v: &Option<Spanned<String>>, default: u64) -> Result<u64, ScenarioError> {
        match v {
            None => Ok(default),
            Some(s) => parse_duration(s.get_ref()).or_else(|m| self.err(s.span(), m)),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Scenario, Vec<Warning>), ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::parse(&text)
    }

    /// Parses and validates a scenario. Either the whole file is accepted or
    /// an error names the offending line.
    pub fn parse(text: &str) -> Result<(Scenario, Vec<Warning>), ScenarioError> {
        let lines = Lines(text);
        if let Some((n, first)) = text.lines().enumerate().find(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#')) {
            if !first.trim_start().starts_with("format") {
                return Err(ScenarioError::Invalid { line: n + 1, msg: format!("first line must be `format = \"{FORMAT}\"`") });
            }
        }
        let raw: RawFile = toml::from_str(text).map_err(|e| ScenarioError::Invalid {
            line: e.span().map(|s| lines.of(s.start)).unwrap_or(1),
            msg: e.message().to_string(),
        })?;
        if raw.format.get_ref() != FORMAT {
            return lines.err(raw.format.span(), format!("unsupported format {:?}, expected {FORMAT:?}", raw.format.get_ref()));
        }
        let d = Scenario::default();
        let mut s = Scenario {
            seed: raw.seed.unwrap_or(d.seed),
            duration: GlobalTime(lines.dur(&raw.duration, d.duration.0)?),
            gst: GlobalTime(lines.dur(&raw.gst, d.gst.0)?),
            n_switches: raw.processes.switches.as_ref().map_or(d.n_switches, |v| *v.get_ref()),
            n_controllers: raw.processes.controllers.as_ref().map_or(d.n_controllers, |v| *v.get_ref()),
            n_dataservers: raw.processes.data_servers.as_ref().map_or(d.n_dataservers, |v| *v.get_ref()),
            delta_us: lines.dur(&raw.protocol.delta, d.delta_us)?,
            lease_us: lines.dur(&raw.protocol.lease, d.lease_us)?,
            p_local: raw.protocol.p_local.as_ref().map_or(d.p_local, |v| *v.get_ref()),
            payload_size: raw.protocol.payload_size.unwrap_or(d.payload_size),
            drift_bound: raw.clocks.drift_bound.as_ref().map_or(d.drift_bound, |v| *v.get_ref()),
            max_offset_us: lines.dur(&raw.clocks.max_offset, d.max_offset_us)?,
            delay_min_us: lines.dur(&raw.channel.delay_min, d.delay_min_us)?,
            delay_bound_us: lines.dur(&raw.channel.delay_bound, d.delay_bound_us)?,
            max_delay_before_gst_us: lines.dur(&raw.channel.max_delay_before_gst, d.max_delay_before_gst_us)?,
            drop_probability_before_gst: raw.channel.drop_probability_before_gst.as_ref().map_or(0.0, |v| *v.get_ref()),
            window: raw.workload.window.unwrap_or(d.window),
            think_us: lines.dur(&raw.workload.think, d.think_us)?,
            buffer_capacity: raw.workload.buffer_capacity.unwrap_or(d.buffer_capacity),
            reset_roles_on_recover: raw.workload.reset_roles_on_recover.unwrap_or(false),
            local_cost_us: lines.dur(&raw.workload.local_cost, d.local_cost_us)?,
            store_cost_us: lines.dur(&raw.workload.store_cost, d.store_cost_us)?,
            app: AppKind::None,
            faults: Vec::new(),
            ..d
        };

        let span_or_top = |o: Option<std::ops::Range<usize>>| o.unwrap_or(0..0);
        if let Some(app) = &raw.workload.app {
            s.app = match app.get_ref().as_str() {
                "none" => AppKind::None,
                "counter" => AppKind::Counter { keys: raw.workload.app_keys.unwrap_or(2) },
                other => return lines.err(app.span(), format!("unknown app {other:?} (none, counter)")),
            };
        }
        if s.delta_us >= s.lease_us {
            let span = span_or_top(raw.protocol.delta.as_ref().map(|v| v.span()));
            return lines.err(span, format!("delta ({}) must be shorter than lease ({})", format_duration(s.delta_us), format_duration(s.lease_us)));
        }
        if s.duration <= s.gst {
            return lines.err(span_or_top(raw.duration.as_ref().map(|v| v.span())), "duration must exceed gst");
        }
        if !(0.0..=1.0).contains(&s.p_local) {
            return lines.err(span_or_top(raw.protocol.p_local.as_ref().map(|v| v.span())), "p_local must be within [0, 1]");
        }
        if !(0.0..0.5).contains(&s.drift_bound) {
            return lines.err(span_or_top(raw.clocks.drift_bound.as_ref().map(|v| v.span())), "drift_bound must be within [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&s.drop_probability_before_gst) {
            return lines.err(span_or_top(raw.channel.drop_probability_before_gst.as_ref().map(|v| v.span())), "drop probability must be within [0, 1]");
        }
        if s.delay_min_us > s.delay_bound_us {
            return lines.err(span_or_top(raw.channel.delay_min.as_ref().map(|v| v.span())), "delay_min exceeds delay_bound");
        }
        if s.n_controllers == 0 {
            return lines.err(span_or_top(raw.processes.controllers.as_ref().map(|v| v.span())), "at least one controller is required");
        }
        if s.n_dataservers == 0 {
            return lines.err(span_or_top(raw.processes.data_servers.as_ref().map(|v| v.span())), "at least one data server is required");
        }

        for f in &raw.fault {
            let span = f.span();
            let rf = f.get_ref();
            let at = parse_duration(rf.at.get_ref()).or_else(|m| lines.err(rf.at.span(), m))?;
            let target = match &rf.target {
                None => None,
                Some(t) => {
                    let id: ProcessId = t.get_ref().parse().or_else(|_| lines.err(t.span(), format!("bad process id {:?}", t.get_ref())))?;
                    if !s.contains(id) {
                        return lines.err(t.span(), format!("no process {id} in this scenario"));
                    }
                    Some(id)
                }
            };
            let kind = match rf.kind.get_ref().as_str() {
                "crash" => Fault::Crash,
                "crash_primary" if target.is_none() => Fault::Crash,
                "crash_primary" => return lines.err(rf.target.as_ref().expect("target").span(), "crash_primary takes no target"),
                "recover" => Fault::Recover,
                "partition_start" => {
                    let mut groups = Vec::new();
                    for g in rf.groups.clone().unwrap_or_default() {
                        let mut ids = Vec::new();
                        for p in g {
                            let id: ProcessId = p.parse().or_else(|_| lines.err(span.clone(), format!("bad process id {p:?}")))?;
                            if !s.contains(id) {
                                return lines.err(span.clone(), format!("no process {id} in this scenario"));
                            }
                            ids.push(id);
                        }
                        groups.push(ids);
                    }
                    Fault::PartitionStart { groups }
                }
                "partition_end" => Fault::PartitionEnd,
                other => return lines.err(rf.kind.span(), format!("unknown fault kind {other:?}")),
            };
            s.faults.push(FaultAction { at: GlobalTime(at), target, kind });
        }
        // Stable sort keeps file order for simultaneous actions.
        let mut order: Vec<usize> = (0..s.faults.len()).collect();
        order.sort_by_key(|&i| s.faults[i].at);
        s.faults = order.iter().map(|&i| s.faults[i].clone()).collect();
        let spans: Vec<_> = order.iter().map(|&i| raw.fault[i].span()).collect();
        if let Err((i, msg)) = s.check_faults() {
            return lines.err(spans[i].clone(), msg);
        }
        let warnings = s.warnings().into_iter().map(|(i, msg)| Warning { line: lines.of(spans[i].start), msg }).collect();
        Ok((s, warnings))
    }

    pub fn switches(&self) -> Vec<ProcessId> {
        (0..self.n_switches as u16).map(ProcessId::switch).collect()
    }

    pub fn controllers(&self) -> Vec<ProcessId> {
        (0..self.n_controllers as u16).map(ProcessId::controller).collect()
    }

    pub fn data_servers(&self) -> Vec<ProcessId> {
        (0..self.n_dataservers as u16).map(ProcessId::data_server).collect()
    }

    pub fn contains(&self, id: ProcessId) -> bool {
        let n = match id.kind {
            ProcessKind::Switch => self.n_switches,
            ProcessKind::Controller => self.n_controllers,
            ProcessKind::DataServer => self.n_dataservers,
        };
        (id.index as usize) < n
    }

    /// Largest tolerated number of simultaneous data-server faults.
    pub fn f_d(&self) -> usize {
        (self.n_dataservers - 1) / 2
    }

    pub fn channel(&self) -> ChannelModel {
        ChannelModel {
            drop_probability_before_gst: self.drop_probability_before_gst,
            delay_min_us: self.delay_min_us,
            delay_bound_after_gst_us: self.delay_bound_us,
            max_delay_before_gst_us: self.max_delay_before_gst_us,
            gst: self.gst,
        }
    }

    /// Structural checks on a time-sorted fault list. Returns the index of
    /// the first offending action.
    pub fn check_faults(&self) -> Result<(), (usize, String)> {
        let mut crashed = BTreeSet::new();
        let mut partitioned = false;
        for (i, f) in self.faults.iter().enumerate() {
            match (&f.kind, f.target) {
                (Fault::Crash, Some(t)) => {
                    if !crashed.insert(t) {
                        return Err((i, format!("{t} is already crashed")));
                    }
                }
                (Fault::Recover, Some(t)) => {
                    if !crashed.remove(&t) {
                        return Err((i, format!("recover of {t} without an earlier crash")));
                    }
                }
                (Fault::Crash, None) => {}
                (Fault::Recover, None) => return Err((i, "recover needs a target".into())),
                (Fault::PartitionStart { groups }, None) => {
                    let mut seen = BTreeSet::new();
                    for id in groups.iter().flatten() {
                        if !seen.insert(*id) {
                            return Err((i, format!("{id} appears in two partition groups")));
                        }
                    }
                    partitioned = true;
                }
                (Fault::PartitionEnd, None) => {
                    if !partitioned {
                        return Err((i, "partition_end without partition_start".into()));
                    }
                    partitioned = false;
                }
                (_, Some(_)) => return Err((i, "partition actions take groups, not a target".into())),
            }
        }
        Ok(())
    }

    /// Legal but degenerate schedules, e.g. losing a data-server majority.
    fn warnings(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        let mut down = 0usize;
        for (i, f) in self.faults.iter().enumerate() {
            let Some(t) = f.target else { continue };
            if !t.is_data_server() {
                continue;
            }
            match f.kind {
                Fault::Crash => {
                    down += 1;
                    if down > self.f_d() {
                        out.push((i, format!("{down} of {} data servers down at once: the store stalls until a majority is back", self.n_dataservers)));
                    }
                }
                Fault::Recover => down -= 1,
                _ => {}
            }
        }
        out
    }

    /// Data servers crashed at the end of the run.
    pub fn crashed_at_end(&self) -> BTreeSet<ProcessId> {
        let mut down = BTreeSet::new();
        for f in &self.faults {
            match (&f.kind, f.target) {
                (Fault::Crash, Some(t)) => {
                    down.insert(t);
                }
                (Fault::Recover, Some(t)) => {
                    down.remove(&t);
                }
                _ => {}
            }
        }
        down
    }

    /// Instant after which no more faults happen and every partition is healed.
    pub fn last_fault(&self) -> GlobalTime {
        self.faults.iter().map(|f| f.at).max().unwrap_or(GlobalTime::ZERO)
    }

    /// Serializes back to the file format.
    pub fn to_toml(&self) -> String {
        let mut o = String::new();
        let d = format_duration;
        let _ = writeln!(o, "format = \"{FORMAT}\"\nseed = {}\nduration = \"{}\"\ngst = \"{}\"\n", self.seed, d(self.duration.0), d(self.gst.0));
        let _ = writeln!(
            o,
            "[processes]\nswitches = {}\ncontrollers = {}\ndata_servers = {}\n",
            self.n_switches, self.n_controllers, self.n_dataservers
        );
        let _ = writeln!(
            o,
            "[protocol]\ndelta = \"{}\"\nlease = \"{}\"\np_local = {:?}\npayload_size = {}\n",
            d(self.delta_us),
            d(self.lease_us),
            self.p_local,
            self.payload_size
        );
        let _ = writeln!(o, "[clocks]\ndrift_bound = {:?}\nmax_offset = \"{}\"\n", self.drift_bound, d(self.max_offset_us));
        let _ = writeln!(
            o,
            "[channel]\ndelay_min = \"{}\"\ndelay_bound = \"{}\"\nmax_delay_before_gst = \"{}\"\ndrop_probability_before_gst = {:?}\n",
            d(self.delay_min_us),
            d(self.delay_bound_us),
            d(self.max_delay_before_gst_us),
            self.drop_probability_before_gst
        );
        let app = match self.app {
            AppKind::None => "app = \"none\"".to_string(),
            AppKind::Counter { keys } => format!("app = \"counter\"\napp_keys = {keys}"),
        };
        let _ = writeln!(
            o,
            "[workload]\nwindow = {}\nthink = \"{}\"\nbuffer_capacity = {}\nreset_roles_on_recover = {}\nlocal_cost = \"{}\"\nstore_cost = \"{}\"\n{app}",
            self.window,
            d(self.think_us),
            self.buffer_capacity,
            self.reset_roles_on_recover,
            d(self.local_cost_us),
            d(self.store_cost_us)
        );
        for f in &self.faults {
            let _ = write!(o, "\n[[fault]]\nat = \"{}\"\n", d(f.at.0));
            match &f.kind {
                Fault::Crash => match f.target {
                    Some(t) => {
                        let _ = writeln!(o, "kind = \"crash\"\ntarget = \"{t}\"");
                    }
                    None => {
                        let _ = writeln!(o, "kind = \"crash_primary\"");
                    }
                },
                Fault::Recover => {
                    let _ = writeln!(o, "kind = \"recover\"\ntarget = \"{}\"", f.target.expect("recover has a target"));
                }
                Fault::PartitionStart { groups } => {
                    let gs: Vec<String> = groups
                        .iter()
                        .map(|g| format!("[{}]", g.iter().map(|p| format!("\"{p}\"")).collect::<Vec<_>>().join(", ")))
                        .collect();
                    let _ = writeln!(o, "kind = \"partition_start\"\ngroups = [{}]", gs.join(", "));
                }
                Fault::PartitionEnd => {
                    let _ = writeln!(o, "kind = \"partition_end\"");
                }
            }
        }
        o
    }
}

/// Time a recovered data server is given to catch up before another data
/// server may fail in generated schedules.
const DATA_SERVER_SETTLE_US: u64 = 1_500_000;

/// Knobs for randomly generated scenarios.
#[derive(Clone, Debug)]
pub struct RandomSpec {
    pub controllers: (usize, usize),
    pub data_servers: (usize, usize),
    pub switches: (usize, usize),
    pub drift_bound: f64,
    pub duration_us: (u64, u64),
    pub leases_us: Vec<u64>,
    pub max_gst_fraction: f64,
    pub max_drop_probability: f64,
    pub max_delay_before_gst_us: u64,
    /// Upper bound on crash/recover and partition episodes.
    pub max_episodes: usize,
    pub partitions: bool,
    pub app: AppKind,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            controllers: (2, 4),
            data_servers: (3, 5),
            switches: (1, 3),
            drift_bound: 1e-3,
            duration_us: (8_000_000, 14_000_000),
            leases_us: vec![250_000, 500_000, 1_000_000],
            max_gst_fraction: 0.5,
            max_drop_probability: 0.3,
            max_delay_before_gst_us: 60_000,
            max_episodes: 4,
            partitions: true,
            app: AppKind::Counter { keys: 2 },
        }
    }
}

impl RandomSpec {
    /// Controllers that keep losing and regaining the lease through
    /// partitions, with a shared-key application running on top.
    pub fn flapping() -> Self {
        RandomSpec {
            controllers: (2, 3),
            data_servers: (3, 3),
            switches: (1, 1),
            drift_bound: 1e-4,
            leases_us: vec![250_000],
            max_gst_fraction: 0.0,
            max_episodes: 6,
            app: AppKind::Counter { keys: 1 },
            ..RandomSpec::default()
        }
    }

    pub fn generate(&self, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_A210);
        let n_controllers = rng.gen_range(self.controllers.0..=self.controllers.1);
        let n_dataservers = rng.gen_range(self.data_servers.0..=self.data_servers.1);
        let n_switches = rng.gen_range(self.switches.0..=self.switches.1);
        let duration = rng.gen_range(self.duration_us.0..=self.duration_us.1);
        let lease_us = self.leases_us[rng.gen_range(0..self.leases_us.len())];
        let gst = if self.max_gst_fraction > 0.0 { rng.gen_range(0..=(duration as f64 * self.max_gst_fraction) as u64) } else { 0 };
        let mut s = Scenario {
            seed,
            duration: GlobalTime(duration),
            gst: GlobalTime(gst),
            n_switches,
            n_controllers,
            n_dataservers,
            delta_us: lease_us / 2,
            lease_us,
            p_local: [0.0, 0.5][rng.gen_range(0..2)],
            drift_bound: self.drift_bound,
            drop_probability_before_gst: rng.gen_range(0.0..=self.max_drop_probability),
            max_delay_before_gst_us: self.max_delay_before_gst_us,
            app: self.app.clone(),
            ..Scenario::default()
        };
        s.faults = self.random_faults(&mut rng, &s);
        s
    }

    fn random_faults(&self, rng: &mut ChaCha8Rng, s: &Scenario) -> Vec<FaultAction> {
        let horizon = s.duration.0.saturating_sub(4_000_000).max(1_000_000);
        let episodes = rng.gen_range(0..=self.max_episodes);
        // Down intervals per process, to keep crash/recover well-formed and
        // data-server faults within the tolerated bound.
        let mut busy: BTreeMap<ProcessId, Vec<(u64, u64)>> = BTreeMap::new();
        let mut partition_busy: Vec<(u64, u64)> = Vec::new();
        let mut out = Vec::new();
        let overlaps = |v: &[(u64, u64)], a: u64, b: u64| v.iter().any(|&(x, y)| a < y && x < b);
        for _ in 0..episodes {
            let start = rng.gen_range(500_000..horizon);
            let len = rng.gen_range(300_000..3_000_000);
            let end = (start + len).min(s.duration.0 - 1_000_000);
            if end <= start {
                continue;
            }
            let pick = rng.gen_range(0..10);
            if self.partitions && pick >= 7 {
                if overlaps(&partition_busy, start, end) {
                    continue;
                }
                let c = ProcessId::controller(rng.gen_range(0..s.n_controllers as u16));
                let rest: Vec<ProcessId> = s.controllers().into_iter().filter(|x| *x != c).chain(s.data_servers()).collect();
                partition_busy.push((start, end));
                out.push(FaultAction { at: GlobalTime(start), target: None, kind: Fault::PartitionStart { groups: vec![vec![c], rest] } });
                out.push(FaultAction { at: GlobalTime(end), target: None, kind: Fault::PartitionEnd });
                continue;
            }
            let target = match pick {
                0..=2 => ProcessId::controller(rng.gen_range(0..s.n_controllers as u16)),
                3..=5 => ProcessId::data_server(rng.gen_range(0..s.n_dataservers as u16)),
                _ => {
                    if s.n_switches == 0 {
                        continue;
                    }
                    ProcessId::switch(rng.gen_range(0..s.n_switches as u16))
                }
            };
            if overlaps(busy.get(&target).map(Vec::as_slice).unwrap_or(&[]), start, end) {
                continue;
            }
            if target.is_data_server() {
                let concurrent = busy
                    .iter()
                    .filter(|(p, v)| p.is_data_server() && overlaps(v, start, end + DATA_SERVER_SETTLE_US))
                    .count();
                if concurrent >= s.f_d() {
                    continue;
                }
            }
            // A restarted data server is faulty until its state transfer completes.
            let settle = if target.is_data_server() { end + DATA_SERVER_SETTLE_US } else { end };
            busy.entry(target).or_default().push((start, settle));
            out.push(FaultAction { at: GlobalTime(start), target: Some(target), kind: Fault::Crash });
            out.push(FaultAction { at: GlobalTime(end), target: Some(target), kind: Fault::Recover });
        }
        out.sort_by_key(|f| f.at);
        out
    }
}

/// Zero-drift, zero-delay runs on a single data server where lease
/// boundaries coincide exactly with coordination ticks.
pub fn boundary_aligned(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00B0_DA2D);
    let lease_us = [200_000u64, 400_000][rng.gen_range(0..2)];
    let n_controllers = rng.gen_range(2..=3usize);
    let mut s = Scenario {
        seed,
        duration: GlobalTime(6_000_000),
        n_switches: 1,
        n_controllers,
        n_dataservers: 1,
        lease_us,
        delta_us: lease_us / 2,
        drift_bound: 0.0,
        max_offset_us: 0,
        delay_min_us: 0,
        delay_bound_us: 0,
        local_cost_us: 0,
        store_cost_us: 0,
        think_us: 1_000,
        ..Scenario::default()
    };
    let mut t = rng.gen_range(1..4) * lease_us;
    while t + 2 * lease_us < s.duration.0 {
        let c = ProcessId::controller(rng.gen_range(0..n_controllers as u16));
        let back = t + rng.gen_range(1..4) * lease_us;
        s.faults.push(FaultAction {
            at: GlobalTime(t),
            target: None,
            kind: Fault::PartitionStart { groups: vec![vec![c], s.controllers().into_iter().filter(|x| *x != c).chain(s.data_servers()).collect()] },
        });
        s.faults.push(FaultAction { at: GlobalTime(back), target: None, kind: Fault::PartitionEnd });
        t = back + rng.gen_range(1..4) * lease_us;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_FILE: &str = include_str!("../scenarios/default.toml");

    #[test]
    fn durations() {
        assert_eq!(parse_duration("1s"), Ok(1_000_000));
        assert_eq!(parse_duration("2.5ms"), Ok(2_500));
        assert_eq!(parse_duration("250us"), Ok(250));
        assert!(parse_duration("10").is_err());
        assert!(parse_duration("1.0000005s").is_err());
        assert_eq!(format_duration(1_500_000), "1500ms");
    }

    #[test]
    fn default_file_loads() {
        let (s, w) = Scenario::parse(DEFAULT_FILE).unwrap();
        assert!(w.is_empty());
        assert_eq!((s.n_controllers, s.n_dataservers), (2, 3));
        assert_eq!((s.delta_us, s.lease_us), (500_000, 1_000_000));
        assert_eq!(s.payload_size, 44);
    }

    #[test]
    fn delta_equal_to_lease_is_rejected_with_line() {
        let text = DEFAULT_FILE.replace("delta = \"500ms\"", "delta = \"1s\"");
        let line = text.lines().position(|l| l.starts_with("delta")).unwrap() + 1;
        match Scenario::parse(&text) {
            Err(ScenarioError::Invalid { line: l, msg }) => {
                assert_eq!(l, line);
                assert!(msg.contains("delta"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn losing_a_majority_warns() {
        let text = format!(
            "{DEFAULT_FILE}\n[[fault]]\nat = \"2s\"\nkind = \"crash\"\ntarget = \"d0\"\n\n[[fault]]\nat = \"3s\"\nkind = \"crash\"\ntarget = \"d1\"\n"
        );
        let (s, w) = Scenario::parse(&text).unwrap();
        assert_eq!(s.faults.len(), 2);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].line, text.lines().count() - 3);
    }

    #[test]
    fn malformed_files_get_a_line() {
        for (bad, want) in [
            ("format = \"ftsdn-scenario/1\"\nseed = \"x\"\n", 2),
            ("format = \"ftsdn-scenario/1\"\n[protocol]\nlease = \"1 parsec\"\n", 3),
            ("format = \"ftsdn-scenario/1\"\nbogus = 1\n", 2),
            ("seed = 1\n", 1),
            ("format = \"ftsdn-scenario/1\"\n[[fault]]\nat = \"1s\"\nkind = \"recover\"\ntarget = \"c0\"\n", 2),
            ("format = \"ftsdn-scenario/1\"\n[[fault]]\nat = \"1s\"\nkind = \"crash\"\ntarget = \"c7\"\n", 5),
        ] {
            match Scenario::parse(bad) {
                Err(ScenarioError::Invalid { line, .. }) => assert_eq!(line, want, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_through_text() {
        for seed in 0..20 {
            let s = RandomSpec::default().generate(seed);
            let (back, _) = Scenario::parse(&s.to_toml()).unwrap();
            assert_eq!(back, s, "seed {seed}");
        }
        let b = boundary_aligned(3);
        assert_eq!(Scenario::parse(&b.to_toml()).unwrap().0, b);
    }

    #[test]
    fn random_schedules_keep_a_data_server_majority() {
        for seed in 0..300 {
            let s = RandomSpec::default().generate(seed);
            s.check_faults().unwrap();
            assert!(s.warnings().is_empty(), "seed {seed}");
        }
    }
}
