//! Trace records emitted by the simulator and protocol state machines.
//!
//! Each record carries the hidden global time alongside the acting process's
//! local clock reading; only the checker interprets the global column.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::datastore::digest_parts;
use crate::ids::ProcessId;
use crate::rsm::OrderedRequest;
use crate::simcore::{GlobalTime, LocalTime};
use crate::switch::Role;

/// How much gets recorded. Higher levels include everything below them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Clock setup, faults, lease and role events, view changes.
    Protocol,
    /// Plus every gated controller action, cache accesses and committed slots.
    #[default]
    Actions,
    /// Plus one record per handler invocation and per packet-in.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    ClockInit { rate_ppb: i64, offset_us: u64 },
    Handled { input: String },
    Crash,
    Recover,
    PartitionStart { groups: Vec<Vec<ProcessId>> },
    PartitionEnd,

    // controller
    TickStart { lease_us: u64 },
    LeaseGranted { start: LocalTime, my_lease: LocalTime, lease_us: u64, ltime_echo: LocalTime, slot: u64 },
    LeaseDenied { start: LocalTime, holder: ProcessId },
    LeaseLost { holder: ProcessId },
    LeaseDoubled { from_us: u64, to_us: u64 },
    /// Primary predicate evaluated right before an externally visible action
    /// (`target` set) or at a tick boundary (`target` empty).
    PrimaryCheck { action: String, target: Option<ProcessId>, primary: bool, my_lease: LocalTime },
    GuardRejected { action: String },
    RoleSent { switch: ProcessId, role: Role },
    CacheHit { table: String, key: Vec<u8>, value_digest: u64 },
    CacheMiss { table: String, key: Vec<u8> },
    CacheFill { table: String, key: Vec<u8>, value_digest: u64 },
    CacheCold,
    PacketInWhileBackup { switch: ProcessId },

    // switch
    RoleChanged { controller: ProcessId, role: Role, previous_master: Option<ProcessId> },
    UnknownController { from: ProcessId },
    PacketInSent { to: ProcessId, flow: u64 },
    PacketInDropped { reason: String, count: u64 },

    // data server
    Stamped { client: ProcessId, req_id: u64, ltime: LocalTime },
    Committed { slot: u64, request: OrderedRequest },
    LeaseGrant { to: ProcessId, ltime: LocalTime, validity: LocalTime, slot: u64 },
    ViewChangeStart { view: u64 },
    NewView { view: u64, leader: ProcessId, log_len: u64 },
    RecoveryStart,
    RecoveryDone { view: u64, log_len: u64 },
    ReplicaSummary { status: String, view: u64, applied: u64, state_digest: u64 },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::ClockInit { .. } => "clock_init",
            TraceEvent::Handled { .. } => "handled",
            TraceEvent::Crash => "crash",
            TraceEvent::Recover => "recover",
            TraceEvent::PartitionStart { .. } => "partition_start",
            TraceEvent::PartitionEnd => "partition_end",
            TraceEvent::TickStart { .. } => "tick_start",
            TraceEvent::LeaseGranted { .. } => "lease_granted",
            TraceEvent::LeaseDenied { .. } => "lease_denied",
            TraceEvent::LeaseLost { .. } => "lease_lost",
            TraceEvent::LeaseDoubled { .. } => "lease_doubled",
            TraceEvent::PrimaryCheck { .. } => "primary_check",
            TraceEvent::GuardRejected { .. } => "guard_rejected",
            TraceEvent::RoleSent { .. } => "role_sent",
            TraceEvent::CacheHit { .. } => "cache_hit",
            TraceEvent::CacheMiss { .. } => "cache_miss",
            TraceEvent::CacheFill { .. } => "cache_fill",
            TraceEvent::CacheCold => "cache_cold",
            TraceEvent::PacketInWhileBackup { .. } => "packet_in_while_backup",
            TraceEvent::RoleChanged { .. } => "role_changed",
            TraceEvent::UnknownController { .. } => "unknown_controller",
            TraceEvent::PacketInSent { .. } => "packet_in_sent",
            TraceEvent::PacketInDropped { .. } => "packet_in_dropped",
            TraceEvent::Stamped { .. } => "stamped",
            TraceEvent::Committed { .. } => "committed",
            TraceEvent::LeaseGrant { .. } => "lease_grant",
            TraceEvent::ViewChangeStart { .. } => "view_change_start",
            TraceEvent::NewView { .. } => "new_view",
            TraceEvent::RecoveryStart => "recovery_start",
            TraceEvent::RecoveryDone { .. } => "recovery_done",
            TraceEvent::ReplicaSummary { .. } => "replica_summary",
        }
    }

    pub fn level(&self) -> TraceLevel {
        match self {
            TraceEvent::Handled { .. } | TraceEvent::PacketInSent { .. } => TraceLevel::Full,
            TraceEvent::PrimaryCheck { .. }
            | TraceEvent::CacheHit { .. }
            | TraceEvent::CacheMiss { .. }
            | TraceEvent::CacheFill { .. }
            | TraceEvent::Stamped { .. }
            | TraceEvent::Committed { .. } => TraceLevel::Actions,
            _ => TraceLevel::Protocol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub global_time_us: u64,
    /// Local clock of `process`; equals the global time for kernel records.
    pub local_time_us: u64,
    pub process: Option<ProcessId>,
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn global(&self) -> GlobalTime {
        GlobalTime(self.global_time_us)
    }

    pub fn local(&self) -> LocalTime {
        LocalTime(self.local_time_us)
    }
}

/// One JSON-lines row.
#[derive(Serialize, Deserialize)]
struct JsonLine {
    global_time_us: u64,
    local_time_us: u64,
    process: Option<ProcessId>,
    event_kind: String,
    payload_digest: String,
    event: TraceEvent,
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        let payload = serde_json::to_vec(&r.event)?;
        let line = JsonLine {
            global_time_us: r.global_time_us,
            local_time_us: r.local_time_us,
            process: r.process,
            event_kind: r.event.kind().to_string(),
            payload_digest: format!("{:016x}", digest_parts(&[&payload])),
            event: r.event.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRecord>, TraceReadError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonLine = serde_json::from_str(&line).map_err(|source| TraceReadError::Parse { line: i + 1, source })?;
        out.push(TraceRecord {
            global_time_us: row.global_time_us,
            local_time_us: row.local_time_us,
            process: row.process,
            event: row.event,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            TraceRecord { global_time_us: 0, local_time_us: 7, process: Some(ProcessId::controller(0)), event: TraceEvent::ClockInit { rate_ppb: -5, offset_us: 7 } },
            TraceRecord { global_time_us: 9, local_time_us: 9, process: None, event: TraceEvent::PartitionEnd },
        ];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"event_kind\":\"clock_init\""));
        assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn bad_line_is_reported_with_number() {
        let err = read_jsonl(&b"\n{oops}\n"[..]).unwrap_err();
        assert!(err.to_string().starts_with("line 2"));
    }
}
