//! Controller replica: lease-based coordination, the primary gate, the
//! single-writer write-through cache and the packet-in service loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datastore::{decode_counter, encode_counter, value_digest, Bytes, DataStoreOp, OpReply};
use crate::ids::ProcessId;
use crate::metrics::Counter;
use crate::msg::{Message, NodeCtx, Timer};
use crate::rsm::{Completed, RsmClient, RsmMsg};
use crate::simcore::{LocalTime, SimError};
use crate::switch::Role;
use crate::trace::{TraceEvent, TraceLevel};

/// Deliberate protocol bugs, used to show the checkers catch them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Mutations {
    /// `my_lease` computed from the reply instant instead of the tick start.
    pub lease_from_reply: bool,
    /// Lease validity test `>=` at the store and `my_lease >= clock()` here.
    pub inclusive_boundaries: bool,
    /// Cache survives demotion and promotion.
    pub keep_cache_on_promotion: bool,
}

#[derive(Clone, Debug)]
pub struct ControllerConfig {
    pub switches: Vec<ProcessId>,
    pub data_servers: Vec<ProcessId>,
    /// Coordination period Δ.
    pub delta_us: u64,
    /// Initial requested lease L.
    pub lease_us: u64,
    /// Probability that a packet-in is served from local state.
    pub p_local: f64,
    pub payload_size: usize,
    pub local_cost_us: u64,
    pub store_cost_us: u64,
    pub rto_us: u64,
    pub role_retransmit_us: u64,
    pub app_period_us: u64,
    /// Standalone baseline: no coordination, every store access is a
    /// synchronous local log append of this latency.
    pub disk_log_latency_us: Option<u64>,
    pub mutations: Mutations,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            switches: Vec::new(),
            data_servers: Vec::new(),
            delta_us: 500_000,
            lease_us: 1_000_000,
            p_local: 0.0,
            payload_size: crate::datastore::DEFAULT_PAYLOAD_SIZE,
            local_cost_us: 10,
            store_cost_us: 260,
            rto_us: 40_000,
            role_retransmit_us: 40_000,
            app_period_us: 50_000,
            disk_log_latency_us: None,
            mutations: Mutations::default(),
        }
    }
}

/// Coordination state of one controller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControllerState {
    pub id: ProcessId,
    pub primary: Option<ProcessId>,
    pub my_lease: LocalTime,
    pub lease_us: u64,
    pub delta_us: u64,
}

impl ControllerState {
    pub fn new(id: ProcessId, lease_us: u64, delta_us: u64) -> Self {
        assert!(delta_us < lease_us, "coordination period must be shorter than the lease");
        ControllerState { id, primary: None, my_lease: LocalTime::ZERO, lease_us, delta_us }
    }

    pub fn i_am_primary(&self, now: LocalTime) -> bool {
        self.my_lease > now
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Cold,
    Warm,
}

/// Primary-side cache. Absent keys are cached as `None`.
#[derive(Clone, Debug)]
pub struct Cache {
    entries: BTreeMap<(String, Bytes), Option<Bytes>>,
    status: CacheStatus,
}

impl Default for Cache {
    fn default() -> Self {
        Cache { entries: BTreeMap::new(), status: CacheStatus::Cold }
    }
}

impl Cache {
    pub fn status(&self) -> CacheStatus {
        self.status
    }

    pub fn lookup(&self, table: &str, key: &[u8]) -> Option<&Option<Bytes>> {
        self.entries.get(&(table.to_string(), key.to_vec()))
    }

    pub fn fill(&mut self, table: &str, key: &[u8], value: Option<Bytes>) {
        self.entries.insert((table.to_string(), key.to_vec()), value);
        self.status = CacheStatus::Warm;
    }

    pub fn invalidate(&mut self, table: &str, key: &[u8]) {
        self.entries.remove(&(table.to_string(), key.to_vec()));
    }

    pub fn make_cold(&mut self) {
        self.entries.clear();
        self.status = CacheStatus::Cold;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Operations a control application asks the controller to run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppOp {
    /// Read through the cache.
    Read { table: String, key: Bytes },
    /// Write-through store operation.
    Write(DataStoreOp),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppResult {
    Value(Option<Bytes>),
    Reply(OpReply),
    NotPrimary,
}

/// Hook for control applications. Called on every app step while the
/// controller is primary and no previous op is pending.
pub trait ControlApp: Send {
    fn next_op(&mut self, rng: &mut ChaCha8Rng, last: Option<AppResult>) -> Option<AppOp>;
}

pub type AppFactory = std::sync::Arc<dyn Fn(ProcessId) -> Box<dyn ControlApp> + Send + Sync>;

/// Read-modify-write counters over a few shared keys.
pub struct CounterApp {
    pub table: String,
    pub keys: u8,
    pending_key: Option<Bytes>,
}

impl CounterApp {
    pub fn new(keys: u8) -> Self {
        CounterApp { table: "app".into(), keys: keys.max(1), pending_key: None }
    }
}

impl ControlApp for CounterApp {
    fn next_op(&mut self, rng: &mut ChaCha8Rng, last: Option<AppResult>) -> Option<AppOp> {
        if let (Some(key), Some(AppResult::Value(v))) = (self.pending_key.take(), last) {
            let next = v.as_deref().and_then(decode_counter).unwrap_or(0) + 1;
            return Some(AppOp::Write(DataStoreOp::Put { table: self.table.clone(), key, value: encode_counter(next) }));
        }
        let key = vec![b'k', b'0' + rng.gen_range(0..self.keys)];
        self.pending_key = Some(key.clone());
        Some(AppOp::Read { table: self.table.clone(), key })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NotPrimary {
    NotPrimary,
}

#[derive(Clone, Debug)]
enum Purpose {
    Lease { start: LocalTime, lease_us: u64 },
    PacketIn { switch: ProcessId, flow: u64 },
    AppRead { table: String, key: Bytes },
    AppWrite,
    Submit,
}

#[derive(Clone, Debug)]
struct Tag {
    purpose: Purpose,
    epoch: u64,
}

#[derive(Clone, Copy, Debug)]
struct Work {
    switch: ProcessId,
    flow: u64,
    local: bool,
}

pub const FLOW_TABLE: &str = "flows";

pub struct Controller {
    cfg: ControllerConfig,
    state: ControllerState,
    cache: Cache,
    /// Bumped on every promotion; replies from older epochs never fill the cache.
    epoch: u64,
    restarts: u64,
    client: RsmClient<Tag>,
    lease_pending: bool,
    roles_pending: BTreeSet<ProcessId>,
    cpu_queue: VecDeque<(ProcessId, u64)>,
    cpu_current: Option<Work>,
    app_factory: Option<AppFactory>,
    app: Option<Box<dyn ControlApp>>,
    app_busy: bool,
    app_last: Option<AppResult>,
    pub stats: ControllerStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ControllerStats {
    pub ticks: u64,
    pub grants: u64,
    pub doublings: u64,
    pub guard_rejections: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub packet_ins_while_backup: u64,
}

impl Controller {
    pub fn new(id: ProcessId, cfg: ControllerConfig, app_factory: Option<AppFactory>) -> Self {
        let state = ControllerState::new(id, cfg.lease_us, cfg.delta_us);
        let client = RsmClient::new(cfg.data_servers.clone(), 0, cfg.rto_us);
        let app = app_factory.as_ref().map(|f| f(id));
        Controller {
            cfg,
            state,
            cache: Cache::default(),
            epoch: 0,
            restarts: 0,
            client,
            lease_pending: false,
            roles_pending: BTreeSet::new(),
            cpu_queue: VecDeque::new(),
            cpu_current: None,
            app_factory,
            app,
            app_busy: false,
            app_last: None,
            stats: ControllerStats::default(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.state.id
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    fn standalone(&self) -> bool {
        self.cfg.disk_log_latency_us.is_some()
    }

    /// `my_lease > clock()`.
    pub fn i_am_primary(&self, now: LocalTime) -> bool {
        if self.standalone() {
            return true;
        }
        if self.cfg.mutations.inclusive_boundaries {
            self.state.my_lease >= now
        } else {
            self.state.i_am_primary(now)
        }
    }

    /// Evaluates the primary predicate for an externally visible action and
    /// records the evaluation.
    fn gate(&mut self, ctx: &mut NodeCtx<'_>, action: &str, target: Option<ProcessId>) -> bool {
        let ok = self.i_am_primary(ctx.clock());
        if ctx.traces(TraceLevel::Actions) {
            ctx.trace(TraceEvent::PrimaryCheck { action: action.to_string(), target, primary: ok, my_lease: self.state.my_lease });
        }
        ok
    }

    fn reject(&mut self, ctx: &mut NodeCtx<'_>, action: &str) {
        self.stats.guard_rejections += 1;
        ctx.trace(TraceEvent::GuardRejected { action: action.to_string() });
    }

    pub fn on_start(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if !self.standalone() {
            ctx.set_timer(0, Timer::CoordinationTick);
            ctx.set_timer(self.cfg.rto_us / 2, Timer::ClientRetransmit);
            ctx.set_timer(self.cfg.role_retransmit_us, Timer::RoleRetransmit);
        } else {
            self.roles_pending = self.cfg.switches.iter().copied().collect();
            ctx.set_timer(self.cfg.role_retransmit_us, Timer::RoleRetransmit);
            self.send_roles(ctx)?;
        }
        if self.app.is_some() {
            ctx.set_timer(self.cfg.app_period_us, Timer::AppStep);
        }
        Ok(())
    }

    /// Restart from initialization; the configured L is used again.
    pub fn on_recover(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let restarts = self.restarts + 1;
        let mut fresh = Controller::new(self.state.id, self.cfg.clone(), self.app_factory.clone());
        fresh.restarts = restarts;
        fresh.client = RsmClient::new(self.cfg.data_servers.clone(), restarts, self.cfg.rto_us);
        *self = fresh;
        self.on_start(ctx)
    }

    pub fn on_timer(&mut self, ctx: &mut NodeCtx<'_>, t: Timer) -> Result<(), SimError> {
        match t {
            Timer::CoordinationTick => self.coordination_tick(ctx),
            Timer::ClientRetransmit => {
                ctx.set_timer(self.cfg.rto_us / 2, Timer::ClientRetransmit);
                self.retransmit(ctx)
            }
            Timer::RoleRetransmit => {
                ctx.set_timer(self.cfg.role_retransmit_us, Timer::RoleRetransmit);
                self.send_roles(ctx)
            }
            Timer::CpuDone => self.cpu_done(ctx),
            Timer::AppStep => {
                ctx.set_timer(self.cfg.app_period_us, Timer::AppStep);
                self.app_step(ctx)
            }
            _ => Ok(()),
        }
    }

    pub fn on_message(&mut self, ctx: &mut NodeCtx<'_>, from: ProcessId, msg: Message) -> Result<(), SimError> {
        match msg {
            Message::Rsm(RsmMsg::Reply { req_id, view, slot, ltime, reply }) => {
                if let Some(done) = self.client.on_reply(req_id, view, slot, ltime, reply) {
                    self.on_completed(ctx, done)?;
                }
                Ok(())
            }
            Message::PacketIn { flow } => self.handle_packet_in(ctx, from, flow),
            Message::RoleAck { role: Role::Master } => {
                self.roles_pending.remove(&from);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// One iteration of the coordination loop: ask the store for the lease.
    fn coordination_tick(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if self.lease_pending {
            return Ok(());
        }
        self.stats.ticks += 1;
        let start = ctx.clock();
        ctx.trace(TraceEvent::TickStart { lease_us: self.state.lease_us });
        self.gate(ctx, "tick_start", None);
        let op = DataStoreOp::AcquireLease { id: self.state.id, lease_us: self.state.lease_us };
        let tag = Tag { purpose: Purpose::Lease { start, lease_us: self.state.lease_us }, epoch: self.epoch };
        self.lease_pending = true;
        self.client.submit(ctx, op, tag)?;
        Ok(())
    }

    fn on_lease_reply(&mut self, ctx: &mut NodeCtx<'_>, start: LocalTime, lease_us: u64, done: &Completed<Tag>) -> Result<(), SimError> {
        self.lease_pending = false;
        let OpReply::Primary(curr) = done.reply else {
            return Ok(());
        };
        let me = self.state.id;
        if curr == me {
            // A lease that lapsed while this request was in flight counts as lost.
            let was_effective = self.state.primary == Some(me) && self.i_am_primary(ctx.clock());
            let base = if self.cfg.mutations.lease_from_reply { ctx.clock() } else { start };
            self.state.my_lease = base + lease_us;
            self.stats.grants += 1;
            ctx.trace(TraceEvent::LeaseGranted {
                start,
                my_lease: self.state.my_lease,
                lease_us,
                ltime_echo: done.ltime,
                slot: done.slot,
            });
            if self.state.my_lease < ctx.clock() {
                let from = self.state.lease_us;
                self.state.lease_us = from.saturating_mul(2);
                self.stats.doublings += 1;
                ctx.trace(TraceEvent::LeaseDoubled { from_us: from, to_us: self.state.lease_us });
            }
            if !was_effective {
                self.epoch += 1;
                if !self.cfg.mutations.keep_cache_on_promotion {
                    self.cache.make_cold();
                    ctx.trace(TraceEvent::CacheCold);
                }
                self.roles_pending = self.cfg.switches.iter().copied().collect();
                self.send_roles(ctx)?;
            }
        } else {
            if self.state.primary == Some(me) {
                ctx.trace(TraceEvent::LeaseLost { holder: curr });
                if !self.cfg.mutations.keep_cache_on_promotion {
                    self.cache.make_cold();
                    ctx.trace(TraceEvent::CacheCold);
                }
                self.roles_pending.clear();
            }
            ctx.trace(TraceEvent::LeaseDenied { start, holder: curr });
        }
        self.state.primary = Some(curr);
        self.gate(ctx, "tick_end", None);
        let elapsed = ctx.clock() - start;
        ctx.set_timer(self.state.delta_us.saturating_sub(elapsed), Timer::CoordinationTick);
        Ok(())
    }

    fn send_roles(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let pending: Vec<ProcessId> = self.roles_pending.iter().copied().collect();
        for s in pending {
            if !self.gate(ctx, "role", Some(s)) {
                return Ok(());
            }
            ctx.trace(TraceEvent::RoleSent { switch: s, role: Role::Master });
            ctx.send(s, Message::RoleRequest { role: Role::Master })?;
        }
        Ok(())
    }

    fn retransmit(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let now = ctx.clock();
        for id in self.client.due(now) {
            let is_lease = self
                .client
                .outstanding()
                .find(|(r, _)| **r == id)
                .is_some_and(|(_, p)| matches!(p.tag.purpose, Purpose::Lease { .. }));
            if is_lease || self.gate(ctx, "store_retransmit", None) {
                self.client.resend(ctx, id)?;
            } else if let Some(p) = self.client.abandon(id) {
                self.on_abandoned(ctx, p.tag);
            }
        }
        Ok(())
    }

    fn on_abandoned(&mut self, ctx: &mut NodeCtx<'_>, tag: Tag) {
        match tag.purpose {
            Purpose::AppRead { .. } | Purpose::AppWrite => {
                self.app_busy = false;
                self.app_last = Some(AppResult::NotPrimary);
            }
            Purpose::PacketIn { .. } => self.start_next_work(ctx),
            _ => {}
        }
    }

    /// Submits `op` to the store if this controller is primary.
    pub fn guarded_submit(&mut self, ctx: &mut NodeCtx<'_>, op: DataStoreOp) -> Result<u64, NotPrimary> {
        self.guarded_submit_tagged(ctx, op, Purpose::Submit)
    }

    fn guarded_submit_tagged(&mut self, ctx: &mut NodeCtx<'_>, op: DataStoreOp, purpose: Purpose) -> Result<u64, NotPrimary> {
        if !self.gate(ctx, op.kind(), None) {
            self.reject(ctx, op.kind());
            return Err(NotPrimary::NotPrimary);
        }
        let tag = Tag { purpose, epoch: self.epoch };
        self.client.submit(ctx, op, tag).map_err(|_| NotPrimary::NotPrimary)
    }

    /// Cache-first read. `Ok(Some(v))` is a hit; `Ok(None)` means a store
    /// read was issued and the value arrives later.
    pub fn cached_get(&mut self, ctx: &mut NodeCtx<'_>, table: &str, key: &[u8]) -> Result<Option<Option<Bytes>>, NotPrimary> {
        if !self.gate(ctx, "cache_read", None) {
            self.reject(ctx, "cache_read");
            return Err(NotPrimary::NotPrimary);
        }
        if let Some(v) = self.cache.lookup(table, key).cloned() {
            self.stats.cache_hits += 1;
            ctx.trace(TraceEvent::CacheHit { table: table.into(), key: key.to_vec(), value_digest: value_digest(v.as_deref()) });
            return Ok(Some(v));
        }
        self.stats.cache_misses += 1;
        ctx.trace(TraceEvent::CacheMiss { table: table.into(), key: key.to_vec() });
        let op = DataStoreOp::Get { table: table.into(), key: key.to_vec() };
        self.guarded_submit_tagged(ctx, op, Purpose::AppRead { table: table.into(), key: key.to_vec() })?;
        Ok(None)
    }

    fn on_completed(&mut self, ctx: &mut NodeCtx<'_>, done: Completed<Tag>) -> Result<(), SimError> {
        let current_epoch = done.tag.epoch == self.epoch;
        match done.tag.purpose.clone() {
            Purpose::Lease { start, lease_us } => self.on_lease_reply(ctx, start, lease_us, &done),
            Purpose::PacketIn { switch, flow } => {
                if self.gate(ctx, "flow_mod", Some(switch)) {
                    ctx.send(switch, Message::FlowMod { flow })?;
                }
                self.start_next_work(ctx);
                Ok(())
            }
            Purpose::AppRead { table, key } => {
                self.app_busy = false;
                let value = match done.reply {
                    OpReply::Value(v) => v,
                    _ => None,
                };
                if current_epoch && self.i_am_primary(ctx.clock()) {
                    ctx.trace(TraceEvent::CacheFill { table: table.clone(), key: key.clone(), value_digest: value_digest(value.as_deref()) });
                    self.cache.fill(&table, &key, value.clone());
                }
                self.app_last = Some(AppResult::Value(value));
                Ok(())
            }
            Purpose::AppWrite | Purpose::Submit => {
                if matches!(done.tag.purpose, Purpose::AppWrite) {
                    self.app_busy = false;
                    self.app_last = Some(AppResult::Reply(done.reply.clone()));
                }
                self.write_through(ctx, &done.op, &done.reply, current_epoch);
                Ok(())
            }
        }
    }

    /// Mirrors a completed write into the cache.
    fn write_through(&mut self, ctx: &mut NodeCtx<'_>, op: &DataStoreOp, reply: &OpReply, current_epoch: bool) {
        let (table, key, new) = match (op, reply) {
            (_, OpReply::Rejected(_)) => {
                if let DataStoreOp::Put { table, key, .. }
                | DataStoreOp::Remove { table, key }
                | DataStoreOp::ReadAndIncrement { table, key }
                | DataStoreOp::AtomicWriteRead { table, key, .. } = op
                {
                    self.cache.invalidate(table, key);
                }
                return;
            }
            (DataStoreOp::Put { table, key, value }, _) => (table, key, Some(value.clone())),
            (DataStoreOp::Remove { table, key }, _) => (table, key, None),
            (DataStoreOp::AtomicWriteRead { table, key, value }, _) => (table, key, Some(value.clone())),
            (DataStoreOp::ReadAndIncrement { table, key }, OpReply::Counter(n)) => (table, key, Some(encode_counter(n + 1))),
            _ => return,
        };
        if current_epoch && self.i_am_primary(ctx.clock()) {
            ctx.trace(TraceEvent::CacheFill { table: table.clone(), key: key.clone(), value_digest: value_digest(new.as_deref()) });
            self.cache.fill(table, key, new);
        } else {
            self.cache.invalidate(table, key);
        }
    }

    fn app_step(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if self.app_busy || !self.i_am_primary(ctx.clock()) {
            return Ok(());
        }
        let Some(app) = self.app.as_mut() else { return Ok(()) };
        let last = self.app_last.take();
        let Some(op) = app.next_op(ctx.rng(), last) else { return Ok(()) };
        match op {
            AppOp::Read { table, key } => match self.cached_get(ctx, &table, &key) {
                Ok(Some(v)) => self.app_last = Some(AppResult::Value(v)),
                Ok(None) => self.app_busy = true,
                Err(_) => self.app_last = Some(AppResult::NotPrimary),
            },
            AppOp::Write(op) => match self.guarded_submit_tagged(ctx, op, Purpose::AppWrite) {
                Ok(_) => self.app_busy = true,
                Err(_) => self.app_last = Some(AppResult::NotPrimary),
            },
        }
        Ok(())
    }

    /// Packet-in from a switch; only the primary serves it.
    fn handle_packet_in(&mut self, ctx: &mut NodeCtx<'_>, switch: ProcessId, flow: u64) -> Result<(), SimError> {
        if !self.i_am_primary(ctx.clock()) {
            self.stats.packet_ins_while_backup += 1;
            ctx.trace(TraceEvent::PacketInWhileBackup { switch });
            return Ok(());
        }
        self.cpu_queue.push_back((switch, flow));
        if self.cpu_current.is_none() {
            self.start_next_work(ctx);
        }
        Ok(())
    }

    fn start_next_work(&mut self, ctx: &mut NodeCtx<'_>) {
        if self.cpu_current.is_some() {
            return;
        }
        let Some((switch, flow)) = self.cpu_queue.pop_front() else { return };
        let p = self.cfg.p_local.clamp(0.0, 1.0);
        let local = ctx.rng().gen_bool(p);
        let cost = match (local, self.cfg.disk_log_latency_us) {
            (true, _) => self.cfg.local_cost_us,
            (false, Some(lat)) => self.cfg.local_cost_us + lat,
            (false, None) => self.cfg.store_cost_us,
        };
        self.cpu_current = Some(Work { switch, flow, local });
        ctx.set_timer(cost, Timer::CpuDone);
    }

    fn cpu_done(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let Some(w) = self.cpu_current.take() else { return Ok(()) };
        if w.local || self.standalone() {
            ctx.count(if w.local { Counter::CacheHit } else { Counter::CacheMiss }, 1);
            if self.gate(ctx, "flow_mod", Some(w.switch)) {
                ctx.send(w.switch, Message::FlowMod { flow: w.flow })?;
            }
        } else {
            ctx.count(Counter::CacheMiss, 1);
            let op = DataStoreOp::AtomicWriteRead {
                table: FLOW_TABLE.into(),
                key: w.switch.to_string().into_bytes(),
                value: payload(w.flow, self.cfg.payload_size),
            };
            if self.guarded_submit_tagged(ctx, op, Purpose::PacketIn { switch: w.switch, flow: w.flow }).is_ok() {
                ctx.count(Counter::RsmOp, 1);
            }
        }
        self.start_next_work(ctx);
        Ok(())
    }
}

fn payload(flow: u64, size: usize) -> Bytes {
    let mut v = vec![0u8; size];
    let b = flow.to_be_bytes();
    let n = b.len().min(size);
    v[..n].copy_from_slice(&b[..n]);
    v
}
