//! Deterministic discrete-event kernel.
//!
//! A single priority queue ordered by `(fire_at, seq)` drives every process.
//! Processes are plain state machines implementing [`Process`]; they see only
//! their own drifting clock through [`Ctx`]. The hidden global clock is
//! visible to the kernel, trace and metrics only.

mod channel;
mod clock;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use channel::{ChannelModel, Transit};
pub use clock::{GlobalTime, LocalClock, LocalTime, PPB};

use crate::ids::ProcessId;
use crate::metrics::{Counter, MetricsRecorder};
use crate::trace::{TraceEvent, TraceLevel, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("topology violation: {from} may not send to {to}")]
    Topology { from: ProcessId, to: ProcessId },
    #[error("watchdog: more than {limit} events at global time {at}")]
    Watchdog { at: GlobalTime, limit: u64 },
    #[error("configuration: {0}")]
    Config(String),
}

/// Fault actions the kernel applies at scheduled instants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    Crash,
    Recover,
    PartitionStart { groups: Vec<Vec<ProcessId>> },
    PartitionEnd,
}

pub enum Input<M, T> {
    Start,
    Message { from: ProcessId, msg: M },
    Timer(T),
}

impl<M: fmt::Debug, T: fmt::Debug> Input<M, T> {
    fn label(&self) -> String {
        match self {
            Input::Start => "start".into(),
            Input::Message { from, msg } => format!("msg from {from}: {msg:?}"),
            Input::Timer(t) => format!("timer {t:?}"),
        }
    }
}

/// A protocol state machine driven by the kernel.
pub trait Process {
    type Msg: fmt::Debug;
    type Timer: fmt::Debug;

    fn on_input(&mut self, ctx: &mut Ctx<'_, Self::Msg, Self::Timer>, input: Input<Self::Msg, Self::Timer>) -> Result<(), SimError>;

    /// Called when the process restarts after a crash; volatile state is lost.
    fn on_recover(&mut self, ctx: &mut Ctx<'_, Self::Msg, Self::Timer>) -> Result<(), SimError>;

    /// Emitted into the trace when the run ends.
    fn final_report(&self, _ctx: &mut Ctx<'_, Self::Msg, Self::Timer>) {}
}

enum Payload<M, T> {
    Input(Input<M, T>),
    Fault(Fault),
}

struct Queued<M, T> {
    fire_at: GlobalTime,
    seq: u64,
    target: Option<ProcessId>,
    /// Timers are discarded if the target crashed after they were set.
    incarnation: Option<u64>,
    payload: Payload<M, T>,
}

impl<M, T> PartialEq for Queued<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
    }
}
impl<M, T> Eq for Queued<M, T> {}
impl<M, T> PartialOrd for Queued<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M, T> Ord for Queued<M, T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (fire_at, seq)
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

struct ProcSlot {
    clock: LocalClock,
    rng: ChaCha8Rng,
    crashed: bool,
    incarnation: u64,
}

/// Opaque handle of a scheduled event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventHandle(pub u64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub dropped_channel: u64,
    pub dropped_partition: u64,
    pub dropped_crashed: u64,
    pub delivered: u64,
}

pub struct Kernel<M, T> {
    now: GlobalTime,
    seq: u64,
    queue: BinaryHeap<Queued<M, T>>,
    procs: HashMap<ProcessId, ProcSlot>,
    channel: ChannelModel,
    net_rng: ChaCha8Rng,
    partition: Option<HashMap<ProcessId, usize>>,
    trace: Vec<TraceRecord>,
    level: TraceLevel,
    metrics: MetricsRecorder,
    net: NetStats,
}

impl<M, T> Kernel<M, T> {
    pub fn now(&self) -> GlobalTime {
        self.now
    }

    fn slot(&self, p: ProcessId) -> Result<&ProcSlot, SimError> {
        self.procs.get(&p).ok_or(SimError::UnknownProcess(p))
    }

    pub fn clock_of(&self, p: ProcessId) -> Result<LocalClock, SimError> {
        Ok(self.slot(p)?.clock)
    }

    pub fn read_clock(&self, p: ProcessId) -> Result<LocalTime, SimError> {
        Ok(self.slot(p)?.clock.read(self.now))
    }

    pub fn is_crashed(&self, p: ProcessId) -> bool {
        self.procs.get(&p).map(|s| s.crashed).unwrap_or(false)
    }

    fn push(&mut self, fire_at: GlobalTime, target: Option<ProcessId>, incarnation: Option<u64>, payload: Payload<M, T>) -> EventHandle {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued { fire_at, seq, target, incarnation, payload });
        EventHandle(seq)
    }

    /// Enqueue `input` for `target` after `delay_local_us` of the target's clock.
    pub fn schedule(&mut self, target: ProcessId, delay_local_us: u64, input: Input<M, T>) -> Result<EventHandle, SimError> {
        let slot = self.slot(target)?;
        let fire_at = self.now + slot.clock.global_duration(delay_local_us);
        let inc = slot.incarnation;
        Ok(self.push(fire_at, Some(target), Some(inc), Payload::Input(input)))
    }

    pub fn schedule_fault(&mut self, at: GlobalTime, target: Option<ProcessId>, fault: Fault) -> Result<EventHandle, SimError> {
        if let Some(t) = target {
            self.slot(t)?;
        }
        Ok(self.push(at.max(self.now), target, None, Payload::Fault(fault)))
    }

    fn connected(&self, a: ProcessId, b: ProcessId) -> bool {
        match &self.partition {
            None => true,
            // Processes left out of every group stay reachable from all sides.
            Some(groups) => match (groups.get(&a), groups.get(&b)) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            },
        }
    }

    pub fn send(&mut self, from: ProcessId, to: ProcessId, msg: M) -> Result<(), SimError> {
        self.slot(from)?;
        self.slot(to)?;
        if !from.may_talk_to(&to) {
            return Err(SimError::Topology { from, to });
        }
        self.net.sent += 1;
        if !self.connected(from, to) {
            self.net.dropped_partition += 1;
            return Ok(());
        }
        match self.channel.sample(self.now, &mut self.net_rng) {
            Transit::Dropped => self.net.dropped_channel += 1,
            Transit::Delayed(d) => {
                let at = self.now + d;
                self.push(at, Some(to), None, Payload::Input(Input::Message { from, msg }));
            }
        }
        Ok(())
    }

    pub fn record(&mut self, process: Option<ProcessId>, event: TraceEvent) {
        if event.level() > self.level {
            return;
        }
        let local = match process.and_then(|p| self.procs.get(&p)) {
            Some(s) => s.clock.read(self.now).0,
            None => self.now.0,
        };
        self.trace.push(TraceRecord { global_time_us: self.now.0, local_time_us: local, process, event });
    }

    pub fn count(&mut self, c: Counter, n: u64) {
        self.metrics.record(self.now, c, n);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn level(&self) -> TraceLevel {
        self.level
    }

    pub fn metrics(&self) -> &MetricsRecorder {
        &self.metrics
    }

    pub fn net_stats(&self) -> NetStats {
        self.net
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }
}

/// Handle given to a process while it runs. Exposes only its own clock.
pub struct Ctx<'a, M, T> {
    me: ProcessId,
    kernel: &'a mut Kernel<M, T>,
}

impl<M, T> Ctx<'_, M, T> {
    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn clock(&self) -> LocalTime {
        self.kernel.procs[&self.me].clock.read(self.kernel.now)
    }

    pub fn send(&mut self, to: ProcessId, msg: M) -> Result<(), SimError> {
        self.kernel.send(self.me, to, msg)
    }

    pub fn set_timer(&mut self, delay_local_us: u64, timer: T) -> EventHandle {
        self.kernel.schedule(self.me, delay_local_us, Input::Timer(timer)).expect("own process exists")
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.kernel.procs.get_mut(&self.me).expect("own process exists").rng
    }

    pub fn trace(&mut self, event: TraceEvent) {
        self.kernel.record(Some(self.me), event);
    }

    pub fn traces(&self, level: TraceLevel) -> bool {
        self.kernel.level >= level
    }

    pub fn count(&mut self, c: Counter, n: u64) {
        self.kernel.count(c, n);
    }
}

/// Kernel plus the processes it drives.
pub struct Simulation<P: Process> {
    kernel: Kernel<P::Msg, P::Timer>,
    procs: BTreeMap<ProcessId, P>,
    pub max_events_per_instant: u64,
    events_processed: u64,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub channel: ChannelModel,
    pub trace_level: TraceLevel,
    pub metrics_window_us: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 0, channel: ChannelModel::default(), trace_level: TraceLevel::Actions, metrics_window_us: 100_000 }
    }
}

/// Per-process stream derived from the run seed.
fn derive_seed(seed: u64, p: ProcessId) -> u64 {
    let tag = match p.kind {
        crate::ids::ProcessKind::Switch => 1u64,
        crate::ids::ProcessKind::Controller => 2,
        crate::ids::ProcessKind::DataServer => 3,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tag << 56) ^ (p.index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

impl<P: Process> Simulation<P> {
    pub fn new(cfg: SimConfig) -> Self {
        Simulation {
            kernel: Kernel {
                now: GlobalTime::ZERO,
                seq: 0,
                queue: BinaryHeap::new(),
                procs: HashMap::new(),
                channel: cfg.channel,
                net_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
                partition: None,
                trace: Vec::new(),
                level: cfg.trace_level,
                metrics: MetricsRecorder::new(cfg.metrics_window_us),
                net: NetStats::default(),
            },
            procs: BTreeMap::new(),
            max_events_per_instant: 1_000_000,
            events_processed: 0,
        }
    }

    /// Registers a process; it receives [`Input::Start`] at the current instant.
    pub fn add_process(&mut self, id: ProcessId, clock: LocalClock, seed: u64, process: P) {
        assert_eq!(clock.owner, id);
        self.kernel.procs.insert(
            id,
            ProcSlot { clock, rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, id)), crashed: false, incarnation: 0 },
        );
        self.procs.insert(id, process);
        self.kernel.record(Some(id), TraceEvent::ClockInit { rate_ppb: clock.rate_ppb, offset_us: clock.offset_us });
        let at = self.kernel.now;
        let inc = Some(0);
        self.kernel.push(at, Some(id), inc, Payload::Input(Input::Start));
    }

    pub fn kernel(&self) -> &Kernel<P::Msg, P::Timer> {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel<P::Msg, P::Timer> {
        &mut self.kernel
    }

    pub fn process(&self, id: ProcessId) -> Option<&P> {
        self.procs.get(&id)
    }

    pub fn process_mut(&mut self, id: ProcessId) -> Option<&mut P> {
        self.procs.get_mut(&id)
    }

    pub fn processes(&self) -> impl Iterator<Item = (&ProcessId, &P)> {
        self.procs.iter()
    }

    pub fn schedule(&mut self, target: ProcessId, delay_local_us: u64, input: Input<P::Msg, P::Timer>) -> Result<EventHandle, SimError> {
        self.kernel.schedule(target, delay_local_us, input)
    }

    pub fn read_clock(&self, p: ProcessId) -> Result<LocalTime, SimError> {
        self.kernel.read_clock(p)
    }

    pub fn now(&self) -> GlobalTime {
        self.kernel.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.kernel.trace
    }

    /// Processes events in `(fire_at, seq)` order until the queue is empty or
    /// the next event lies beyond `stop`. The global clock ends at `stop`
    /// when one is given.
    pub fn run_until(&mut self, stop: Option<GlobalTime>) -> Result<&[TraceRecord], SimError> {
        let mut instant = GlobalTime::ZERO;
        let mut at_instant = 0u64;
        while let Some(top) = self.kernel.queue.peek() {
            if stop.is_some_and(|s| top.fire_at > s) {
                break;
            }
            let ev = self.kernel.queue.pop().expect("peeked");
            if ev.fire_at == instant {
                at_instant += 1;
                if at_instant > self.max_events_per_instant {
                    return Err(SimError::Watchdog { at: instant, limit: self.max_events_per_instant });
                }
            } else {
                instant = ev.fire_at;
                at_instant = 1;
            }
            self.kernel.now = ev.fire_at;
            self.events_processed += 1;
            self.dispatch(ev)?;
        }
        if let Some(s) = stop {
            self.kernel.now = self.kernel.now.max(s);
        }
        Ok(&self.kernel.trace)
    }

    fn dispatch(&mut self, ev: Queued<P::Msg, P::Timer>) -> Result<(), SimError> {
        match ev.payload {
            Payload::Fault(f) => self.apply_fault(ev.target, f),
            Payload::Input(input) => {
                let target = ev.target.expect("inputs have targets");
                let slot = self.kernel.slot(target)?;
                if slot.crashed {
                    if matches!(input, Input::Message { .. }) {
                        self.kernel.net.dropped_crashed += 1;
                    }
                    return Ok(());
                }
                if ev.incarnation.is_some_and(|i| i != slot.incarnation) {
                    return Ok(());
                }
                if matches!(input, Input::Message { .. }) {
                    self.kernel.net.delivered += 1;
                }
                if self.kernel.level >= TraceLevel::Full {
                    self.kernel.record(Some(target), TraceEvent::Handled { input: input.label() });
                }
                let proc = self.procs.get_mut(&target).ok_or(SimError::UnknownProcess(target))?;
                let mut ctx = Ctx { me: target, kernel: &mut self.kernel };
                proc.on_input(&mut ctx, input)
            }
        }
    }

    fn apply_fault(&mut self, target: Option<ProcessId>, fault: Fault) -> Result<(), SimError> {
        match fault {
            Fault::Crash => {
                let t = target.ok_or_else(|| SimError::Config("crash needs a target".into()))?;
                let slot = self.kernel.procs.get_mut(&t).ok_or(SimError::UnknownProcess(t))?;
                if !slot.crashed {
                    slot.crashed = true;
                    slot.incarnation += 1;
                    self.kernel.record(Some(t), TraceEvent::Crash);
                }
                Ok(())
            }
            Fault::Recover => {
                let t = target.ok_or_else(|| SimError::Config("recover needs a target".into()))?;
                let slot = self.kernel.procs.get_mut(&t).ok_or(SimError::UnknownProcess(t))?;
                if !slot.crashed {
                    return Ok(());
                }
                slot.crashed = false;
                self.kernel.record(Some(t), TraceEvent::Recover);
                let proc = self.procs.get_mut(&t).ok_or(SimError::UnknownProcess(t))?;
                let mut ctx = Ctx { me: t, kernel: &mut self.kernel };
                proc.on_recover(&mut ctx)
            }
            Fault::PartitionStart { groups } => {
                let mut map = HashMap::new();
                for (i, g) in groups.iter().enumerate() {
                    for p in g {
                        map.insert(*p, i);
                    }
                }
                self.kernel.partition = Some(map);
                self.kernel.record(None, TraceEvent::PartitionStart { groups });
                Ok(())
            }
            Fault::PartitionEnd => {
                self.kernel.partition = None;
                self.kernel.record(None, TraceEvent::PartitionEnd);
                Ok(())
            }
        }
    }

    /// Lets every live process append its end-of-run summary to the trace.
    pub fn finish(&mut self) {
        let ids: Vec<ProcessId> = self.procs.keys().copied().collect();
        for id in ids {
            if self.kernel.is_crashed(id) {
                continue;
            }
            let proc = &self.procs[&id];
            let mut ctx = Ctx { me: id, kernel: &mut self.kernel };
            proc.final_report(&mut ctx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Ping {
        Ping(u32),
    }

    #[derive(Debug, Clone, PartialEq)]
    enum Tick {
        Once,
        Again(u32),
    }

    #[derive(Default)]
    struct Echo {
        got: Vec<(LocalTime, String)>,
        peer: Option<ProcessId>,
        timer_at_start: Option<u64>,
        recovered: u32,
    }

    impl Process for Echo {
        type Msg = Ping;
        type Timer = Tick;

        fn on_input(&mut self, ctx: &mut Ctx<'_, Ping, Tick>, input: Input<Ping, Tick>) -> Result<(), SimError> {
            match input {
                Input::Start => {
                    if let Some(d) = self.timer_at_start {
                        ctx.set_timer(d, Tick::Once);
                    }
                }
                Input::Message { msg: Ping::Ping(n), .. } => self.got.push((ctx.clock(), format!("ping {n}"))),
                Input::Timer(Tick::Once) => {
                    self.got.push((ctx.clock(), "tick".into()));
                    if let Some(p) = self.peer {
                        ctx.send(p, Ping::Ping(1))?;
                    }
                }
                Input::Timer(Tick::Again(n)) => self.got.push((ctx.clock(), format!("again {n}"))),
            }
            Ok(())
        }

        fn on_recover(&mut self, _ctx: &mut Ctx<'_, Ping, Tick>) -> Result<(), SimError> {
            self.recovered += 1;
            Ok(())
        }
    }

    fn sim(seed: u64, level: TraceLevel) -> Simulation<Echo> {
        Simulation::new(SimConfig { seed, trace_level: level, ..Default::default() })
    }

    const C1: ProcessId = ProcessId::controller(1);
    const D1: ProcessId = ProcessId::data_server(1);
    const S1: ProcessId = ProcessId::switch(1);

    #[test]
    fn empty_queue_returns_empty_trace() {
        let mut s = sim(0, TraceLevel::Full);
        assert!(s.run_until(None).unwrap().is_empty());
    }

    #[test]
    fn one_timer_one_handler_invocation() {
        let mut s = sim(0, TraceLevel::Full);
        s.add_process(C1, LocalClock::ideal(C1), 0, Echo::default());
        s.run_until(None).unwrap();
        s.kernel_mut().trace.clear();
        s.schedule(C1, 1_000_000, Input::Timer(Tick::Again(0))).unwrap();
        let trace = s.run_until(None).unwrap();
        let handled: Vec<_> = trace.iter().filter(|r| matches!(r.event, TraceEvent::Handled { .. })).collect();
        assert_eq!(handled.len(), 1);
        assert_eq!(handled[0].global_time_us, 1_000_000);
    }

    #[test]
    fn schedule_converts_through_drift() {
        let mut s = sim(0, TraceLevel::Protocol);
        s.add_process(C1, LocalClock::new(C1, 10_000_000, 0), 0, Echo::default());
        s.run_until(None).unwrap();
        s.schedule(C1, 500_000, Input::Timer(Tick::Again(1))).unwrap();
        s.run_until(Some(GlobalTime(495_049))).unwrap();
        assert!(s.process(C1).unwrap().got.is_empty());
        s.run_until(Some(GlobalTime(495_050))).unwrap();
        assert_eq!(s.process(C1).unwrap().got.len(), 1);
        assert_eq!(s.now(), GlobalTime(495_050));
    }

    #[test]
    fn zero_delay_fires_after_queued_same_time_events() {
        let mut s = sim(0, TraceLevel::Protocol);
        s.add_process(C1, LocalClock::ideal(C1), 0, Echo::default());
        s.run_until(None).unwrap();
        s.schedule(C1, 0, Input::Timer(Tick::Again(1))).unwrap();
        s.schedule(C1, 0, Input::Timer(Tick::Again(2))).unwrap();
        s.run_until(None).unwrap();
        let got: Vec<_> = s.process(C1).unwrap().got.iter().map(|g| g.1.clone()).collect();
        assert_eq!(got, vec!["again 1", "again 2"]);
    }

    #[test]
    fn unknown_target_is_a_configuration_error() {
        let mut s = sim(0, TraceLevel::Protocol);
        assert_eq!(s.schedule(C1, 0, Input::Start).unwrap_err(), SimError::UnknownProcess(C1));
    }

    #[test]
    fn switch_to_data_server_is_a_topology_error() {
        let mut s = sim(0, TraceLevel::Protocol);
        s.add_process(S1, LocalClock::ideal(S1), 0, Echo { peer: Some(D1), timer_at_start: Some(10), ..Default::default() });
        s.add_process(D1, LocalClock::ideal(D1), 0, Echo::default());
        assert_eq!(s.run_until(None).unwrap_err(), SimError::Topology { from: S1, to: D1 });
    }

    #[test]
    fn read_clock_reports_local_time() {
        let mut s = sim(0, TraceLevel::Protocol);
        s.add_process(C1, LocalClock::new(C1, 20_000_000, 3_000_000), 0, Echo::default());
        s.run_until(Some(GlobalTime(100_000_000))).unwrap();
        assert_eq!(s.read_clock(C1).unwrap(), LocalTime(105_000_000));
        assert_eq!(s.read_clock(C1).unwrap(), s.read_clock(C1).unwrap());
    }

    #[test]
    fn post_gst_delivery_within_bound() {
        let mut s = sim(7, TraceLevel::Protocol);
        s.add_process(C1, LocalClock::ideal(C1), 0, Echo { peer: Some(D1), timer_at_start: Some(0), ..Default::default() });
        s.add_process(D1, LocalClock::ideal(D1), 0, Echo::default());
        s.run_until(None).unwrap();
        let got = &s.process(D1).unwrap().got;
        assert_eq!(got.len(), 1);
        assert!(got[0].0 .0 <= ChannelModel::default().delay_bound_after_gst_us);
    }

    #[test]
    fn total_loss_before_gst_never_delivers() {
        let channel = ChannelModel { drop_probability_before_gst: 1.0, gst: GlobalTime(u64::MAX), ..Default::default() };
        let mut s: Simulation<Echo> = Simulation::new(SimConfig { channel, ..Default::default() });
        s.add_process(C1, LocalClock::ideal(C1), 0, Echo { peer: Some(D1), timer_at_start: Some(0), ..Default::default() });
        s.add_process(D1, LocalClock::ideal(D1), 0, Echo::default());
        s.run_until(None).unwrap();
        assert!(s.process(D1).unwrap().got.is_empty());
        assert_eq!(s.kernel().net_stats().dropped_channel, 1);
    }

    #[test]
    fn crash_silences_and_recover_restarts() {
        let mut s = sim(0, TraceLevel::Protocol);
        s.add_process(C1, LocalClock::ideal(C1), 0, Echo::default());
        s.run_until(None).unwrap();
        s.schedule(C1, 100, Input::Timer(Tick::Again(1))).unwrap();
        s.kernel_mut().schedule_fault(GlobalTime(50), Some(C1), Fault::Crash).unwrap();
        s.kernel_mut().schedule_fault(GlobalTime(200), Some(C1), Fault::Recover).unwrap();
        s.run_until(None).unwrap();
        let p = s.process(C1).unwrap();
        assert!(p.got.is_empty(), "timer set before the crash must not fire");
        assert_eq!(p.recovered, 1);
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let channel = ChannelModel { drop_probability_before_gst: 0.3, gst: GlobalTime(1_000_000), ..Default::default() };
            let mut s: Simulation<Echo> = Simulation::new(SimConfig { seed, channel, trace_level: TraceLevel::Full, ..Default::default() });
            s.add_process(C1, LocalClock::new(C1, 1234, 5), seed, Echo { peer: Some(D1), timer_at_start: Some(3), ..Default::default() });
            s.add_process(D1, LocalClock::ideal(D1), seed, Echo::default());
            for i in 0..50 {
                s.schedule(C1, i * 1_000, Input::Timer(Tick::Once)).unwrap();
            }
            s.run_until(None).unwrap().to_vec()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
