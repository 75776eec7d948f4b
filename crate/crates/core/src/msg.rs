//! Simulated wire messages and timer tags shared by all node types.

use crate::rsm::RsmMsg;
use crate::simcore::Ctx;
use crate::switch::Role;

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Rsm(RsmMsg),
    RoleRequest { role: Role },
    RoleAck { role: Role },
    PacketIn { flow: u64 },
    FlowMod { flow: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Timer {
    // controller
    CoordinationTick,
    CpuDone,
    ClientRetransmit,
    RoleRetransmit,
    AppStep,
    // data server
    Heartbeat,
    LeaderCheck,
    RecoveryRetry,
    // switch
    FlowSlot,
}

pub type NodeCtx<'a> = Ctx<'a, Message, Timer>;
