use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three disjoint process sets of the system model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProcessKind {
    Switch,
    Controller,
    DataServer,
}

impl ProcessKind {
    fn prefix(self) -> char {
        match self {
            ProcessKind::Switch => 's',
            ProcessKind::Controller => 'c',
            ProcessKind::DataServer => 'd',
        }
    }
}

/// Identifies a process within one scenario. Rendered as `s0`, `c1`, `d2`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId {
    pub kind: ProcessKind,
    pub index: u16,
}

impl ProcessId {
    pub const fn switch(index: u16) -> Self {
        ProcessId { kind: ProcessKind::Switch, index }
    }

    pub const fn controller(index: u16) -> Self {
        ProcessId { kind: ProcessKind::Controller, index }
    }

    pub const fn data_server(index: u16) -> Self {
        ProcessId { kind: ProcessKind::DataServer, index }
    }

    pub fn is_switch(&self) -> bool {
        self.kind == ProcessKind::Switch
    }

    pub fn is_controller(&self) -> bool {
        self.kind == ProcessKind::Controller
    }

    pub fn is_data_server(&self) -> bool {
        self.kind == ProcessKind::DataServer
    }

    /// Whether the system model lets `self` and `other` exchange messages.
    /// Switches talk to controllers, controllers to data servers, and data
    /// servers among themselves. Nothing else.
    pub fn may_talk_to(&self, other: &ProcessId) -> bool {
        use ProcessKind::*;
        matches!(
            (self.kind, other.kind),
            (Switch, Controller)
                | (Controller, Switch)
                | (Controller, DataServer)
                | (DataServer, Controller)
                | (DataServer, DataServer)
        )
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index)
    }
}

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid process id `{0}` (expected s<N>, c<N> or d<N>)")]
pub struct ParseProcessIdError(String);

impl FromStr for ProcessId {
    type Err = ParseProcessIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseProcessIdError(s.to_string());
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('s') => ProcessKind::Switch,
            Some('c') => ProcessKind::Controller,
            Some('d') => ProcessKind::DataServer,
            _ => return Err(err()),
        };
        let index = chars.as_str().parse::<u16>().map_err(|_| err())?;
        Ok(ProcessId { kind, index })
    }
}

impl Serialize for ProcessId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProcessId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        for id in [ProcessId::switch(3), ProcessId::controller(0), ProcessId::data_server(12)] {
            assert_eq!(id.to_string().parse::<ProcessId>().unwrap(), id);
        }
        assert!("x1".parse::<ProcessId>().is_err());
        assert!("c".parse::<ProcessId>().is_err());
    }

    #[test]
    fn topology() {
        let (s, c, d) = (ProcessId::switch(0), ProcessId::controller(0), ProcessId::data_server(0));
        assert!(s.may_talk_to(&c) && c.may_talk_to(&s));
        assert!(c.may_talk_to(&d) && d.may_talk_to(&c));
        assert!(d.may_talk_to(&ProcessId::data_server(1)));
        assert!(!s.may_talk_to(&d) && !d.may_talk_to(&s));
        assert!(!c.may_talk_to(&ProcessId::controller(1)));
        assert!(!s.may_talk_to(&ProcessId::switch(1)));
    }
}
