//! Multi-controller switch with OpenFlow-style connection roles and a
//! CBench-like closed-loop packet-in generator.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ids::ProcessId;
use crate::metrics::Counter;
use crate::msg::{Message, NodeCtx, Timer};
use crate::simcore::SimError;
use crate::trace::{TraceEvent, TraceLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Equal,
    Master,
    Slave,
}

/// Per-controller connection roles. At most one controller is Master.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleTable {
    roles: BTreeMap<ProcessId, Role>,
}

impl RoleTable {
    pub fn new(controllers: &[ProcessId]) -> Self {
        RoleTable { roles: controllers.iter().map(|c| (*c, Role::Equal)).collect() }
    }

    pub fn role(&self, c: ProcessId) -> Option<Role> {
        self.roles.get(&c).copied()
    }

    pub fn master(&self) -> Option<ProcessId> {
        self.roles.iter().find(|(_, r)| **r == Role::Master).map(|(c, _)| *c)
    }

    /// Makes `c` Master and every other controller Slave. Returns `false`
    /// for a controller the switch does not know.
    pub fn set_master(&mut self, c: ProcessId) -> bool {
        if !self.roles.contains_key(&c) {
            return false;
        }
        for (id, role) in self.roles.iter_mut() {
            *role = if *id == c { Role::Master } else { Role::Slave };
        }
        true
    }

    pub fn reset(&mut self) {
        for r in self.roles.values_mut() {
            *r = Role::Equal;
        }
    }
}

#[derive(Clone, Debug)]
pub struct SwitchConfig {
    pub controllers: Vec<ProcessId>,
    /// Packet-ins kept in flight (0 disables load generation).
    pub window: usize,
    /// Pause between a completed flow and the next packet-in of that slot.
    pub think_us: u64,
    /// Packet-ins held while no Master is known; overflow drops the oldest.
    pub buffer_capacity: usize,
    /// Retry delay for a slot whose packet-in was dropped.
    pub retry_us: u64,
    pub reset_roles_on_recover: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            controllers: Vec::new(),
            window: 1,
            think_us: 0,
            buffer_capacity: 1024,
            retry_us: 10_000,
            reset_roles_on_recover: false,
        }
    }
}

pub struct Switch {
    id: ProcessId,
    cfg: SwitchConfig,
    roles: RoleTable,
    next_flow: u64,
    /// flow id -> controller it was sent to
    outstanding: BTreeMap<u64, ProcessId>,
    buffer: VecDeque<u64>,
    pub stats: SwitchStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SwitchStats {
    pub sent: u64,
    pub completed: u64,
    pub lost: u64,
    pub queue_dropped: u64,
}

impl Switch {
    pub fn new(id: ProcessId, cfg: SwitchConfig) -> Self {
        let roles = RoleTable::new(&cfg.controllers);
        Switch { id, cfg, roles, next_flow: 0, outstanding: BTreeMap::new(), buffer: VecDeque::new(), stats: SwitchStats::default() }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn roles(&self) -> &RoleTable {
        &self.roles
    }

    pub fn in_flight(&self) -> u64 {
        self.outstanding.len() as u64
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn on_start(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        for _ in 0..self.cfg.window {
            self.emit_packet_in(ctx)?;
        }
        Ok(())
    }

    pub fn on_recover(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        if self.cfg.reset_roles_on_recover {
            self.roles.reset();
        }
        let lost = self.outstanding.len() as u64;
        let unsent = self.buffer.len() as u64;
        self.outstanding.clear();
        self.buffer.clear();
        self.stats.lost += lost;
        self.stats.queue_dropped += unsent;
        ctx.count(Counter::PacketInLost, lost);
        ctx.count(Counter::QueueDropped, unsent);
        self.on_start(ctx)
    }

    fn transmit(&mut self, ctx: &mut NodeCtx<'_>, flow: u64, to: ProcessId) -> Result<(), SimError> {
        debug_assert_eq!(self.roles.role(to), Some(Role::Master));
        self.outstanding.insert(flow, to);
        self.stats.sent += 1;
        ctx.count(Counter::PacketInSent, 1);
        if ctx.traces(TraceLevel::Full) {
            ctx.trace(TraceEvent::PacketInSent { to, flow });
        }
        ctx.send(to, Message::PacketIn { flow })
    }

    /// Starts one new flow: sent to the Master, or buffered when there is none.
    pub fn emit_packet_in(&mut self, ctx: &mut NodeCtx<'_>) -> Result<(), SimError> {
        let flow = self.next_flow;
        self.next_flow += 1;
        if let Some(m) = self.roles.master() {
            return self.transmit(ctx, flow, m);
        }
        if self.cfg.buffer_capacity == 0 {
            self.stats.queue_dropped += 1;
            ctx.count(Counter::QueueDropped, 1);
            ctx.set_timer(self.cfg.retry_us, Timer::FlowSlot);
            return Ok(());
        }
        if self.buffer.len() >= self.cfg.buffer_capacity {
            self.buffer.pop_front();
            self.stats.queue_dropped += 1;
            ctx.count(Counter::QueueDropped, 1);
            ctx.trace(TraceEvent::PacketInDropped { reason: "queue_overflow".into(), count: 1 });
            ctx.set_timer(self.cfg.retry_us, Timer::FlowSlot);
        }
        self.buffer.push_back(flow);
        Ok(())
    }

    pub fn on_timer(&mut self, ctx: &mut NodeCtx<'_>, t: Timer) -> Result<(), SimError> {
        if t == Timer::FlowSlot {
            self.emit_packet_in(ctx)?;
        }
        Ok(())
    }

    pub fn on_message(&mut self, ctx: &mut NodeCtx<'_>, from: ProcessId, msg: Message) -> Result<(), SimError> {
        match msg {
            Message::RoleRequest { role: Role::Master } => self.on_role_change(ctx, from),
            Message::RoleRequest { .. } => Ok(()),
            Message::FlowMod { flow } => {
                if self.outstanding.get(&flow) == Some(&from) {
                    self.outstanding.remove(&flow);
                    self.stats.completed += 1;
                    ctx.count(Counter::FlowCompleted, 1);
                    if self.cfg.think_us == 0 {
                        self.emit_packet_in(ctx)?;
                    } else {
                        ctx.set_timer(self.cfg.think_us, Timer::FlowSlot);
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Master request from `from`: it becomes Master, all others Slave.
    pub fn on_role_change(&mut self, ctx: &mut NodeCtx<'_>, from: ProcessId) -> Result<(), SimError> {
        let previous = self.roles.master();
        if !self.roles.set_master(from) {
            ctx.trace(TraceEvent::UnknownController { from });
            return Ok(());
        }
        if previous != Some(from) {
            ctx.trace(TraceEvent::RoleChanged { controller: from, role: Role::Master, previous_master: previous });
            // In-flight packet-ins at the old master are written off and reissued.
            let stranded: Vec<u64> = self.outstanding.keys().copied().collect();
            if !stranded.is_empty() {
                self.outstanding.clear();
                self.stats.lost += stranded.len() as u64;
                ctx.count(Counter::PacketInLost, stranded.len() as u64);
                ctx.trace(TraceEvent::PacketInDropped { reason: "master_changed".into(), count: stranded.len() as u64 });
                for _ in &stranded {
                    self.emit_packet_in(ctx)?;
                }
            }
            while let Some(flow) = self.buffer.pop_front() {
                self.transmit(ctx, flow, from)?;
            }
        }
        ctx.send(from, Message::RoleAck { role: Role::Master })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_cascade() {
        let (c1, c2) = (ProcessId::controller(1), ProcessId::controller(2));
        let mut t = RoleTable::new(&[c1, c2]);
        assert_eq!(t.role(c1), Some(Role::Equal));
        assert_eq!(t.master(), None);
        assert!(t.set_master(c1));
        assert_eq!((t.role(c1), t.role(c2)), (Some(Role::Master), Some(Role::Slave)));
        assert!(t.set_master(c2));
        assert_eq!((t.role(c1), t.role(c2)), (Some(Role::Slave), Some(Role::Master)));
        assert!(t.set_master(c2));
        assert_eq!(t.master(), Some(c2));
        assert!(!t.set_master(ProcessId::controller(9)));
        assert_eq!(t.master(), Some(c2));
    }
}
