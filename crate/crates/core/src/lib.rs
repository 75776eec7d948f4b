//! Fault-tolerant SDN controller coordination: lease-based primary election
//! over a replicated key-value store, run inside a deterministic simulator.

pub mod bench;
pub mod checker;
pub mod controller;
pub mod datastore;
pub mod ids;
pub mod metrics;
pub mod msg;
pub mod node;
pub mod rsm;
pub mod scenario;
pub mod simcore;
pub mod switch;
pub mod trace;
pub mod world;
