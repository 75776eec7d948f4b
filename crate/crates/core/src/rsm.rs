//! Total-order broadcast among data servers.
//!
//! A minimal viewstamped-replication loop: the leader of view `v` is
//! `replicas[v % n]`; it stamps each new client request with its local clock
//! (`ltime`), assigns the next slot and replicates it to a majority before
//! committing. Followers that stop hearing from the leader start a view
//! change; the new leader adopts the most up-to-date log of a majority.
//! Crashed replicas lose their memory and rejoin through a recovery exchange
//! with a majority that includes the current leader.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{DataStore, DataStoreOp, OpReply};
use crate::ids::ProcessId;
use crate::msg::{Message, NodeCtx, Timer};
use crate::simcore::{LocalTime, SimError};
use crate::trace::TraceEvent;

/// A client request with the sequencer's timestamp and its slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedRequest {
    pub client: ProcessId,
    pub req_id: u64,
    /// Lowest request id the client still waits for; older replies can go.
    pub min_pending: u64,
    pub op: DataStoreOp,
    pub ltime: LocalTime,
    pub sequence_no: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuorumConfig {
    pub n: usize,
    pub f_d: usize,
}

impl QuorumConfig {
    /// Tolerates the largest `f_d` with `f_d < n / 2`.
    pub fn for_replicas(n: usize) -> Self {
        assert!(n > 0);
        QuorumConfig { n, f_d: (n - 1) / 2 }
    }

    pub fn quorum(&self) -> usize {
        self.n / 2 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RsmMsg {
    Request { req_id: u64, min_pending: u64, op: DataStoreOp },
    Reply { req_id: u64, view: u64, slot: u64, ltime: LocalTime, reply: OpReply },
    Propose { view: u64, start: usize, entries: Vec<OrderedRequest>, commit: usize },
    Accept { view: u64, len: usize },
    StartViewChange { view: u64 },
    DoViewChange { view: u64, log: Vec<OrderedRequest>, last_normal_view: u64, commit: usize },
    StartView { view: u64, log: Vec<OrderedRequest>, commit: usize },
    StateTransferRequest { nonce: u64 },
    StateTransferReply { view: u64, nonce: u64, state: Option<(Vec<OrderedRequest>, usize)> },
}

#[derive(Clone, Debug, PartialEq)]
struct SessionEntry {
    reply: OpReply,
    slot: u64,
    ltime: LocalTime,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Session {
    low_water: u64,
    replies: BTreeMap<u64, SessionEntry>,
}

/// Outcome of applying one slot.
#[derive(Clone, Debug, PartialEq)]
pub enum Applied {
    /// First application of this request.
    Fresh { reply: OpReply },
    /// Duplicate of an earlier slot; the cached reply is returned again.
    Duplicate { reply: OpReply, slot: u64, ltime: LocalTime },
    /// The client no longer waits for this id; nothing to do.
    Stale,
}

/// Data store plus per-client deduplication; what every replica applies.
#[derive(Clone, Debug, Default)]
pub struct ReplicatedStore {
    pub store: DataStore,
    sessions: BTreeMap<ProcessId, Session>,
}

impl ReplicatedStore {
    pub fn new(store: DataStore) -> Self {
        ReplicatedStore { store, sessions: BTreeMap::new() }
    }

    pub fn apply(&mut self, req: &OrderedRequest) -> Applied {
        let session = self.sessions.entry(req.client).or_default();
        if req.min_pending > session.low_water {
            session.low_water = req.min_pending;
            session.replies = session.replies.split_off(&req.min_pending);
        }
        if req.req_id < session.low_water {
            return Applied::Stale;
        }
        if let Some(e) = session.replies.get(&req.req_id) {
            return Applied::Duplicate { reply: e.reply.clone(), slot: e.slot, ltime: e.ltime };
        }
        let reply = self.store.apply(req.client, &req.op, req.ltime);
        session.replies.insert(req.req_id, SessionEntry { reply: reply.clone(), slot: req.sequence_no, ltime: req.ltime });
        Applied::Fresh { reply }
    }

    fn cached(&self, client: ProcessId, req_id: u64) -> Option<&SessionEntry> {
        self.sessions.get(&client)?.replies.get(&req_id)
    }

    fn is_stale(&self, client: ProcessId, req_id: u64) -> bool {
        self.sessions.get(&client).is_some_and(|s| req_id < s.low_water)
    }

    pub fn state_digest(&self) -> u64 {
        self.store.state_digest()
    }
}

/// Most log entries re-sent to a lagging follower per heartbeat.
const CATCH_UP_BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct RsmConfig {
    pub heartbeat_us: u64,
    pub leader_timeout_us: u64,
    pub fence_writes: bool,
    /// Seeded mutation: `>=` in the lease validity test.
    pub inclusive_lease_guard: bool,
}

impl RsmConfig {
    pub fn for_delay_bound(delay_bound_us: u64) -> Self {
        RsmConfig {
            heartbeat_us: delay_bound_us,
            leader_timeout_us: 4 * delay_bound_us,
            fence_writes: true,
            inclusive_lease_guard: false,
        }
    }

    fn fresh_store(&self) -> ReplicatedStore {
        ReplicatedStore::new(DataStore::new(self.fence_writes).with_inclusive_guard(self.inclusive_lease_guard))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Normal,
    ViewChange,
    Recovering,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Normal => "normal",
            Status::ViewChange => "view_change",
            Status::Recovering => "recovering",
        }
    }
}

struct ViewChangeVote {
    last_normal_view: u64,
    log: Vec<OrderedRequest>,
    commit: usize,
}

pub struct Replica {
    id: ProcessId,
    replicas: Vec<ProcessId>,
    quorum: QuorumConfig,
    cfg: RsmConfig,

    status: Status,
    view: u64,
    last_normal_view: u64,
    log: Vec<OrderedRequest>,
    commit: usize,
    applied: usize,
    state: ReplicatedStore,
    digests: Vec<u64>,

    // leader
    acked: BTreeMap<ProcessId, usize>,
    acked_at_last_heartbeat: BTreeMap<ProcessId, usize>,
    in_log: HashSet<(ProcessId, u64)>,
    /// `(ltime, clock)` pair the stamps continue from after a view change.
    stamp_frame: Option<(LocalTime, LocalTime)>,
    last_stamp: LocalTime,

    // follower
    last_heard: LocalTime,
    out_of_order: BTreeMap<usize, Vec<OrderedRequest>>,

    // view change
    votes: BTreeMap<ProcessId, ViewChangeVote>,
    view_change_started: LocalTime,

    // recovery
    nonce: u64,
    transfer_replies: BTreeMap<ProcessId, (u64, Option<(Vec<OrderedRequest>, usize)>)>,
}

impl Replica {
    pub fn new(id: ProcessId, mut replicas: Vec<ProcessId>, cfg: RsmConfig) -> Self {
        replicas.sort();
        assert!(replicas.contains(&id));
        let quorum = QuorumConfig::for_replicas(replicas.len());
        let state = cfg.fresh_store();
        Replica {
            id,
            replicas,
            quorum,
            cfg,
            status: Status::Normal,
            view: 0,
            last_normal_view: 0,
            log: Vec::new(),
            commit: 0,
            applied: 0,
            state,
            digests: Vec::new(),
            acked: BTreeMap::new(),
            acked_at_last_heartbeat: BTreeMap::new(),
            in_log: HashSet::new(),
            stamp_frame: None,
            last_stamp: LocalTime::ZERO,
            last_heard: LocalTime::ZERO,
            out_of_order: BTreeMap::new(),
            votes: BTreeMap::new(),
            view_change_started: LocalTime::ZERO,
            nonce: 0,
            transfer_replies: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn log(&self) -> &[OrderedRequest] {
        &self.log
    }

    pub fn committed_upto(&self) -> usize {
        self.commit
    }

    pub fn applied(&self) -> usize {
        self.applied
    }

    pub fn store(&self) -> &ReplicatedStore {
        &self.state
    }

    pub fn state_digest(&self) -> u64 {
        self.state.state_digest()
    }

    /// State digest after each applied slot.
    pub fn digest_history(&self) -> &[u64] {
        &self.digests
    }

    pub fn leader_of(&self, view: u64) -> ProcessId {
        self.replicas[(view % self.replicas.len() as u64) as usize]
    }

    pub fn is_leader(&self) -> bool {
        self.status == Status::Normal && self.leader_of(self.view) == self.id
    }

    fn others(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.replicas.iter().copied().filter(move |r| *r != self.id)
    }

    fn send(&self, ctx: &mut NodeCtx<'_>, to: ProcessId, m: RsmMsg) -> Result<(), SimError> {
        ctx.send(to, Message::Rsm(m))
    }

    fn broadcast(&self, ctx: &mut NodeCtx<'_>, m: RsmMsg) -> Result<(), SimError> {
        for r in self.others() {
            ctx.send(r, Message::Rsm(m.clone()))?;
        }
        Ok(())
    }

    pub fn on_start(&mut self, ctx: &mut NodeCtx<'_>) {
        self.last_heard = ctx.clock();
        ctx.set_timer(self.cfg.heartbeat_us, Timer::Heartbeat);
        ctx.set_timer(self.cfg.leader_timeout_us / 2, Timer::LeaderCheck);
    }

    /// Restart after a crash: memory is gone, state comes from the others.
    pub fn recover(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let fresh = Replica::new(self.id, self.replicas.clone(), self.cfg.clone());
        *self = fresh;
        ctx.trace(TraceEvent::RecoveryStart);
        self.on_start(ctx);
        if self.replicas.len() == 1 {
            return Ok(());
        }
        self.status = Status::Recovering;
        // One nonce per recovery; replies to earlier retries stay usable.
        self.nonce = ctx.rng().gen();
        self.request_state(ctx)
    }

    fn request_state(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        ctx.set_timer(self.cfg.leader_timeout_us, Timer::RecoveryRetry);
        self.broadcast(ctx, RsmMsg::StateTransferRequest { nonce: self.nonce })
    }

    pub fn on_timer(&mut self, ctx: &mut NodeCtx<'_>, t: Timer) -> Result<(), SimError> {
        match t {
            Timer::Heartbeat => {
                ctx.set_timer(self.cfg.heartbeat_us, Timer::Heartbeat);
                if self.is_leader() {
                    self.heartbeat(ctx)?;
                }
            }
            Timer::LeaderCheck => {
                ctx.set_timer(self.cfg.leader_timeout_us / 2, Timer::LeaderCheck);
                let now = ctx.clock();
                match self.status {
                    Status::Normal if !self.is_leader() && now - self.last_heard > self.cfg.leader_timeout_us => {
                        self.start_view_change(ctx, self.view + 1)?;
                    }
                    Status::ViewChange if now - self.view_change_started > self.cfg.leader_timeout_us => {
                        self.start_view_change(ctx, self.view + 1)?;
                    }
                    _ => {}
                }
            }
            Timer::RecoveryRetry
                if self.status == Status::Recovering => {
                    self.request_state(ctx)?;
                }
            _ => {}
        }
        Ok(())
    }

    fn heartbeat(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let others: Vec<ProcessId> = self.others().collect();
        for f in others {
            let acked = self.acked.get(&f).copied().unwrap_or(0);
            let stalled = self.acked_at_last_heartbeat.get(&f).copied() == Some(acked);
            let start = if stalled && acked < self.log.len() { acked } else { self.log.len() };
            self.acked_at_last_heartbeat.insert(f, acked);
            let end = self.log.len().min(start + CATCH_UP_BATCH);
            let entries = self.log[start..end].to_vec();
            self.send(ctx, f, RsmMsg::Propose { view: self.view, start, entries, commit: self.commit })?;
        }
        Ok(())
    }

    fn stamp(&mut self, ctx: &NodeCtx<'_>) -> LocalTime {
        let now = ctx.clock();
        let t = match self.stamp_frame {
            None => now,
            Some((base_ltime, base_clock)) => base_ltime + (now - base_clock),
        };
        self.last_stamp = self.last_stamp.max(t);
        self.last_stamp
    }

    pub fn on_message(&mut self, ctx: &mut NodeCtx<'_>, from: ProcessId, m: RsmMsg) -> Result<(), SimError> {
        match m {
            RsmMsg::Request { req_id, min_pending, op } => self.on_request(ctx, from, req_id, min_pending, op),
            RsmMsg::Propose { view, start, entries, commit } => self.on_propose(ctx, from, view, start, entries, commit),
            RsmMsg::Accept { view, len } => self.on_accept(ctx, from, view, len),
            RsmMsg::StartViewChange { view } => {
                if self.status != Status::Recovering && view > self.view {
                    self.start_view_change(ctx, view)?;
                }
                Ok(())
            }
            RsmMsg::DoViewChange { view, log, last_normal_view, commit } => {
                if self.status == Status::Recovering || view < self.view {
                    return Ok(());
                }
                if view > self.view {
                    self.start_view_change(ctx, view)?;
                }
                if self.status == Status::ViewChange && self.leader_of(view) == self.id {
                    self.votes.insert(from, ViewChangeVote { last_normal_view, log, commit });
                    self.maybe_finish_view_change(ctx)?;
                }
                Ok(())
            }
            RsmMsg::StartView { view, log, commit } => {
                if self.status == Status::Recovering || view < self.view || from != self.leader_of(view) {
                    return Ok(());
                }
                if view == self.view && self.status == Status::Normal {
                    return Ok(());
                }
                self.enter_view(ctx, view, log);
                self.advance_commit(ctx, commit)?;
                let len = self.log.len();
                self.send(ctx, from, RsmMsg::Accept { view, len })
            }
            RsmMsg::StateTransferRequest { nonce } => {
                if self.status != Status::Normal {
                    return Ok(());
                }
                let state = self.is_leader().then(|| (self.log.clone(), self.commit));
                self.send(ctx, from, RsmMsg::StateTransferReply { view: self.view, nonce, state })
            }
            RsmMsg::StateTransferReply { view, nonce, state } => {
                if self.status != Status::Recovering || nonce != self.nonce {
                    return Ok(());
                }
                self.transfer_replies.insert(from, (view, state));
                self.maybe_finish_recovery(ctx)
            }
            RsmMsg::Reply { .. } => Ok(()),
        }
    }

    fn on_request(&mut self, ctx: &mut NodeCtx<'_>, client: ProcessId, req_id: u64, min_pending: u64, op: DataStoreOp) -> Result<(), SimError> {
        if !client.is_controller() {
            return Err(SimError::Topology { from: client, to: self.id });
        }
        if !self.is_leader() {
            return Ok(());
        }
        if let Some(e) = self.state.cached(client, req_id) {
            let reply = RsmMsg::Reply { req_id, view: self.view, slot: e.slot, ltime: e.ltime, reply: e.reply.clone() };
            return self.send(ctx, client, reply);
        }
        if self.state.is_stale(client, req_id) || self.in_log.contains(&(client, req_id)) {
            return Ok(());
        }
        let ltime = self.stamp(ctx);
        ctx.trace(TraceEvent::Stamped { client, req_id, ltime });
        let slot = self.log.len();
        let req = OrderedRequest { client, req_id, min_pending, op, ltime, sequence_no: slot as u64 };
        self.in_log.insert((client, req_id));
        self.log.push(req.clone());
        let others: Vec<ProcessId> = self.others().collect();
        for f in others {
            self.send(ctx, f, RsmMsg::Propose { view: self.view, start: slot, entries: vec![req.clone()], commit: self.commit })?;
        }
        self.try_commit(ctx)
    }

    fn on_propose(
        &mut self,
        ctx: &mut NodeCtx<'_>,
        from: ProcessId,
        view: u64,
        start: usize,
        entries: Vec<OrderedRequest>,
        commit: usize,
    ) -> Result<(), SimError> {
        if self.status == Status::Recovering || view < self.view || from != self.leader_of(view) {
            return Ok(());
        }
        if view > self.view || self.status == Status::ViewChange {
            // Missed the new view's announcement: keep only what is known committed.
            let mut log = std::mem::take(&mut self.log);
            log.truncate(self.commit);
            self.enter_view(ctx, view, log);
        }
        self.last_heard = ctx.clock();
        let before = self.log.len();
        if start > self.log.len() {
            if !entries.is_empty() {
                self.out_of_order.insert(start, entries);
            }
        } else {
            self.append_from(start, entries);
            while let Some((&s, _)) = self.out_of_order.first_key_value() {
                if s > self.log.len() {
                    break;
                }
                let (s, e) = self.out_of_order.pop_first().expect("non-empty");
                self.append_from(s, e);
            }
        }
        self.advance_commit(ctx, commit)?;
        if self.log.len() != before || start <= before {
            let len = self.log.len();
            self.send(ctx, from, RsmMsg::Accept { view, len })?;
        }
        Ok(())
    }

    fn append_from(&mut self, start: usize, entries: Vec<OrderedRequest>) {
        let skip = self.log.len().saturating_sub(start);
        self.log.extend(entries.into_iter().skip(skip));
    }

    fn on_accept(&mut self, ctx: &mut NodeCtx<'_>, from: ProcessId, view: u64, len: usize) -> Result<(), SimError> {
        if view != self.view || !self.is_leader() {
            return Ok(());
        }
        self.acked.insert(from, len.min(self.log.len()));
        self.try_commit(ctx)
    }

    fn try_commit(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let mut lens: Vec<usize> = self.others().map(|f| self.acked.get(&f).copied().unwrap_or(0)).collect();
        lens.push(self.log.len());
        lens.sort_unstable_by(|a, b| b.cmp(a));
        let majority_len = lens[self.quorum.quorum() - 1];
        self.advance_commit(ctx, majority_len)
    }

    fn advance_commit(&mut self, ctx: &mut NodeCtx<'_>, commit: usize) -> Result<(), SimError> {
        let target = commit.min(self.log.len());
        if target > self.commit {
            self.commit = target;
        }
        while self.applied < self.commit {
            let req = self.log[self.applied].clone();
            let lease_before = self.state.store.lease;
            let outcome = self.state.apply(&req);
            self.digests.push(self.state.state_digest());
            self.applied += 1;
            if !self.is_leader() {
                continue;
            }
            ctx.trace(TraceEvent::Committed { slot: req.sequence_no, request: req.clone() });
            if let DataStoreOp::AcquireLease { id, .. } = req.op {
                let after = self.state.store.lease;
                let granted = matches!(outcome, Applied::Fresh { .. })
                    && after.primary == Some(id)
                    && (lease_before.primary != Some(id) || lease_before.lease_validity <= req.ltime);
                if granted {
                    ctx.trace(TraceEvent::LeaseGrant { to: id, ltime: req.ltime, validity: after.lease_validity, slot: req.sequence_no });
                }
            }
            let (reply, slot, ltime) = match outcome {
                Applied::Fresh { reply } => (reply, req.sequence_no, req.ltime),
                Applied::Duplicate { reply, slot, ltime } => (reply, slot, ltime),
                Applied::Stale => continue,
            };
            self.send(ctx, req.client, RsmMsg::Reply { req_id: req.req_id, view: self.view, slot, ltime, reply })?;
        }
        Ok(())
    }

    fn start_view_change(&mut self, ctx: &mut NodeCtx<'_>, view: u64) -> Result<(), SimError> {
        self.view = view;
        self.status = Status::ViewChange;
        self.view_change_started = ctx.clock();
        self.votes.clear();
        self.out_of_order.clear();
        ctx.trace(TraceEvent::ViewChangeStart { view });
        self.broadcast(ctx, RsmMsg::StartViewChange { view })?;
        let leader = self.leader_of(view);
        if leader == self.id {
            self.votes.insert(
                self.id,
                ViewChangeVote { last_normal_view: self.last_normal_view, log: self.log.clone(), commit: self.commit },
            );
            self.maybe_finish_view_change(ctx)
        } else {
            let m = RsmMsg::DoViewChange {
                view,
                log: self.log.clone(),
                last_normal_view: self.last_normal_view,
                commit: self.commit,
            };
            self.send(ctx, leader, m)
        }
    }

    fn maybe_finish_view_change(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if self.votes.len() < self.quorum.quorum() {
            return Ok(());
        }
        let votes = std::mem::take(&mut self.votes);
        let commit = votes.values().map(|v| v.commit).max().unwrap_or(0);
        let best = votes
            .into_values()
            .max_by(|a, b| (a.last_normal_view, a.log.len()).cmp(&(b.last_normal_view, b.log.len())))
            .expect("quorum is non-empty");
        let view = self.view;
        self.enter_view(ctx, view, best.log);
        let log = self.log.clone();
        self.broadcast(ctx, RsmMsg::StartView { view, log, commit: commit.min(self.log.len()) })?;
        self.advance_commit(ctx, commit)?;
        self.try_commit(ctx)
    }

    /// Adopt `log` as the state of `view` and become normal in it.
    fn enter_view(&mut self, ctx: &mut NodeCtx<'_>, view: u64, log: Vec<OrderedRequest>) {
        debug_assert!(log.len() >= self.applied || self.applied == 0 || log.len() >= self.commit.min(self.applied));
        self.view = view;
        self.status = Status::Normal;
        self.last_normal_view = view;
        self.log = log;
        self.out_of_order.clear();
        self.votes.clear();
        self.last_heard = ctx.clock();
        self.acked.clear();
        self.acked_at_last_heartbeat.clear();
        self.in_log = self.log.iter().map(|r| (r.client, r.req_id)).collect();
        if self.leader_of(view) == self.id {
            let newest = self.log.iter().map(|r| r.ltime).max().unwrap_or(LocalTime::ZERO).max(self.last_stamp);
            self.stamp_frame = Some((newest, ctx.clock()));
            self.last_stamp = newest;
            ctx.trace(TraceEvent::NewView { view, leader: self.id, log_len: self.log.len() as u64 });
        }
    }

    fn maybe_finish_recovery(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if self.transfer_replies.len() < self.quorum.quorum() {
            return Ok(());
        }
        let max_view = self.transfer_replies.values().map(|(v, _)| *v).max().expect("non-empty");
        let leader = self.leader_of(max_view);
        let Some((view, Some((log, commit)))) = self.transfer_replies.get(&leader).cloned() else {
            return Ok(());
        };
        debug_assert_eq!(view, max_view);
        self.view = view;
        self.status = Status::Normal;
        self.last_normal_view = view;
        self.log = log;
        self.in_log = self.log.iter().map(|r| (r.client, r.req_id)).collect();
        self.last_heard = ctx.clock();
        self.transfer_replies.clear();
        self.advance_commit(ctx, commit)?;
        ctx.trace(TraceEvent::RecoveryDone { view, log_len: self.log.len() as u64 });
        let len = self.log.len();
        self.send(ctx, leader, RsmMsg::Accept { view, len })
    }

    pub fn final_report(&self, ctx: &mut NodeCtx<'_>) {
        ctx.trace(TraceEvent::ReplicaSummary {
            status: self.status.as_str().to_string(),
            view: self.view,
            applied: self.applied as u64,
            state_digest: self.state_digest(),
        });
    }
}

/// Client side of the RSM: request ids, leader hint and retransmission.
#[derive(Clone, Debug)]
pub struct RsmClient<Tag> {
    servers: Vec<ProcessId>,
    leader_hint: usize,
    /// High bits carry the process incarnation so ids stay unique across restarts.
    next_req: u64,
    outstanding: BTreeMap<u64, Pending<Tag>>,
    pub rto_us: u64,
}

#[derive(Clone, Debug)]
pub struct Pending<Tag> {
    pub op: DataStoreOp,
    pub tag: Tag,
    pub sent_at: LocalTime,
}

/// Reply matched to its request.
#[derive(Clone, Debug)]
pub struct Completed<Tag> {
    pub req_id: u64,
    pub tag: Tag,
    pub op: DataStoreOp,
    pub reply: OpReply,
    pub slot: u64,
    pub ltime: LocalTime,
}

impl<Tag: Clone> RsmClient<Tag> {
    pub fn new(mut servers: Vec<ProcessId>, incarnation: u64, rto_us: u64) -> Self {
        servers.sort();
        RsmClient { servers, leader_hint: 0, next_req: incarnation << 40, outstanding: BTreeMap::new(), rto_us }
    }

    pub fn outstanding(&self) -> impl Iterator<Item = (&u64, &Pending<Tag>)> {
        self.outstanding.iter()
    }

    pub fn in_flight(&self) -> usize {
        self.outstanding.len()
    }

    fn min_pending(&self) -> u64 {
        self.outstanding.keys().next().copied().unwrap_or(self.next_req)
    }

    pub fn submit(&mut self, ctx: &mut NodeCtx<'_>, op: DataStoreOp, tag: Tag) -> Result<u64, SimError> {
        let req_id = self.next_req;
        self.next_req += 1;
        let now = ctx.clock();
        self.outstanding.insert(req_id, Pending { op: op.clone(), tag, sent_at: now });
        let min_pending = self.min_pending();
        if let Some(&leader) = self.servers.get(self.leader_hint) {
            ctx.send(leader, Message::Rsm(RsmMsg::Request { req_id, min_pending, op }))?;
        }
        Ok(req_id)
    }

    /// Resend `req_id` to every server.
    pub fn resend(&mut self, ctx: &mut NodeCtx<'_>, req_id: u64) -> Result<(), SimError> {
        let min_pending = self.min_pending();
        let now = ctx.clock();
        let Some(p) = self.outstanding.get_mut(&req_id) else { return Ok(()) };
        p.sent_at = now;
        let op = p.op.clone();
        for &s in &self.servers {
            ctx.send(s, Message::Rsm(RsmMsg::Request { req_id, min_pending, op: op.clone() }))?;
        }
        Ok(())
    }

    /// Requests whose last transmission is at least one RTO old.
    pub fn due(&self, now: LocalTime) -> Vec<u64> {
        self.outstanding.iter().filter(|(_, p)| now - p.sent_at >= self.rto_us).map(|(id, _)| *id).collect()
    }

    pub fn abandon(&mut self, req_id: u64) -> Option<Pending<Tag>> {
        self.outstanding.remove(&req_id)
    }

    pub fn on_reply(&mut self, req_id: u64, view: u64, slot: u64, ltime: LocalTime, reply: OpReply) -> Option<Completed<Tag>> {
        if !self.servers.is_empty() {
            self.leader_hint = (view % self.servers.len() as u64) as usize;
        }
        let p = self.outstanding.remove(&req_id)?;
        Some(Completed { req_id, tag: p.tag, op: p.op, reply, slot, ltime })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_arithmetic() {
        assert_eq!(QuorumConfig::for_replicas(3).quorum(), 2);
        assert_eq!(QuorumConfig::for_replicas(3).f_d, 1);
        assert_eq!(QuorumConfig::for_replicas(4).quorum(), 3);
        assert_eq!(QuorumConfig::for_replicas(4).f_d, 1);
        assert_eq!(QuorumConfig::for_replicas(5).quorum(), 3);
        assert_eq!(QuorumConfig::for_replicas(5).f_d, 2);
    }

    fn req(client: u16, req_id: u64, min_pending: u64, slot: u64) -> OrderedRequest {
        OrderedRequest {
            client: ProcessId::controller(client),
            req_id,
            min_pending,
            op: DataStoreOp::ReadAndIncrement { table: "t".into(), key: b"k".to_vec() },
            ltime: LocalTime(slot),
            sequence_no: slot,
        }
    }

    #[test]
    fn duplicates_are_applied_once() {
        let mut s = ReplicatedStore::new(DataStore::new(false));
        assert_eq!(s.apply(&req(0, 5, 5, 0)), Applied::Fresh { reply: OpReply::Counter(0) });
        assert_eq!(
            s.apply(&req(0, 5, 5, 1)),
            Applied::Duplicate { reply: OpReply::Counter(0), slot: 0, ltime: LocalTime(0) }
        );
        assert_eq!(s.apply(&req(1, 5, 5, 2)), Applied::Fresh { reply: OpReply::Counter(1) });
        // client 0 moved on: id 5 is now below its low-water mark
        assert_eq!(s.apply(&req(0, 6, 6, 3)), Applied::Fresh { reply: OpReply::Counter(2) });
        assert_eq!(s.apply(&req(0, 5, 6, 4)), Applied::Stale);
    }
}
