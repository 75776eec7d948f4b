//! Deterministic replica code: the lease primitive, a table-structured
//! key-value store and two compound operations.
//!
//! Everything here is a pure function of `(state, client, op, ltime)`; the
//! replication layer feeds requests in slot order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ids::ProcessId;
use crate::simcore::LocalTime;

pub type Bytes = Vec<u8>;

/// Benchmark payload size for atomic write-read.
pub const DEFAULT_PAYLOAD_SIZE: usize = 44;

/// Lease record kept next to (not inside) the user tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseState {
    pub primary: Option<ProcessId>,
    pub lease_validity: LocalTime,
}

impl LeaseState {
    /// Grant, renew or refuse a lease, evaluated against the sequencer's `ltime`.
    ///
    /// A lease that is still valid (`lease_validity > ltime`) is renewed only
    /// for its owner; an expired one goes to the caller. Returns the primary
    /// after the update.
    pub fn acquire(&mut self, id: ProcessId, lease_us: u64, ltime: LocalTime) -> ProcessId {
        self.acquire_with(id, lease_us, ltime, false)
    }

    /// `inclusive_guard` turns the validity test into `>=`. Only used to
    /// seed a protocol mutation in tests.
    pub(crate) fn acquire_with(&mut self, id: ProcessId, lease_us: u64, ltime: LocalTime, inclusive_guard: bool) -> ProcessId {
        let valid = self.primary.is_some()
            && if inclusive_guard { self.lease_validity >= ltime } else { self.lease_validity > ltime };
        if valid {
            if self.primary == Some(id) {
                self.lease_validity = ltime + lease_us;
            }
        } else {
            self.primary = Some(id);
            self.lease_validity = ltime + lease_us;
        }
        self.primary.expect("a primary is always set after acquire")
    }
}

/// Operations accepted by the store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataStoreOp {
    AcquireLease { id: ProcessId, lease_us: u64 },
    Put { table: String, key: Bytes, value: Bytes },
    Get { table: String, key: Bytes },
    Remove { table: String, key: Bytes },
    List { table: String },
    ReadAndIncrement { table: String, key: Bytes },
    AtomicWriteRead { table: String, key: Bytes, value: Bytes },
}

impl DataStoreOp {
    pub fn is_write(&self) -> bool {
        matches!(
            self,
            DataStoreOp::Put { .. }
                | DataStoreOp::Remove { .. }
                | DataStoreOp::ReadAndIncrement { .. }
                | DataStoreOp::AtomicWriteRead { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DataStoreOp::AcquireLease { .. } => "acquire_lease",
            DataStoreOp::Put { .. } => "put",
            DataStoreOp::Get { .. } => "get",
            DataStoreOp::Remove { .. } => "remove",
            DataStoreOp::List { .. } => "list",
            DataStoreOp::ReadAndIncrement { .. } => "read_and_increment",
            DataStoreOp::AtomicWriteRead { .. } => "atomic_write_read",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum OpError {
    #[error("stored value is not a big-endian u64")]
    NotAnInteger,
    #[error("write from {client} refused: store primary is {primary:?}")]
    Fenced { client: ProcessId, primary: Option<ProcessId> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpReply {
    Primary(ProcessId),
    Value(Option<Bytes>),
    Keys(Vec<Bytes>),
    Counter(u64),
    Rejected(OpError),
}

/// User tables. An absent table behaves as an empty one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyValueState {
    tables: BTreeMap<String, BTreeMap<Bytes, Bytes>>,
}

impl KeyValueState {
    pub fn get(&self, table: &str, key: &[u8]) -> Option<&Bytes> {
        self.tables.get(table).and_then(|t| t.get(key))
    }

    pub fn put(&mut self, table: &str, key: Bytes, value: Bytes) -> Option<Bytes> {
        self.tables.entry(table.to_string()).or_default().insert(key, value)
    }

    pub fn remove(&mut self, table: &str, key: &[u8]) -> Option<Bytes> {
        let t = self.tables.get_mut(table)?;
        let old = t.remove(key);
        if t.is_empty() {
            self.tables.remove(table);
        }
        old
    }

    /// Keys of `table` in lexicographic byte order.
    pub fn list(&self, table: &str) -> Vec<Bytes> {
        self.tables.get(table).map(|t| t.keys().cloned().collect()).unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Bytes, &Bytes)> {
        self.tables.iter().flat_map(|(t, m)| m.iter().map(move |(k, v)| (t.as_str(), k, v)))
    }

    /// Put, Get, Remove and List. Other variants are not plain KV ops.
    pub fn apply_kv(&mut self, op: &DataStoreOp) -> OpReply {
        match op {
            DataStoreOp::Put { table, key, value } => OpReply::Value(self.put(table, key.clone(), value.clone())),
            DataStoreOp::Get { table, key } => OpReply::Value(self.get(table, key).cloned()),
            DataStoreOp::Remove { table, key } => OpReply::Value(self.remove(table, key)),
            DataStoreOp::List { table } => OpReply::Keys(self.list(table)),
            other => panic!("{} is not a key-value operation", other.kind()),
        }
    }

    /// Returns the current counter (0 when absent) and stores its successor.
    pub fn apply_read_and_increment(&mut self, table: &str, key: &[u8]) -> Result<u64, OpError> {
        let current = match self.get(table, key) {
            None => 0,
            Some(v) => decode_counter(v).ok_or(OpError::NotAnInteger)?,
        };
        self.put(table, key.to_vec(), encode_counter(current.wrapping_add(1)));
        Ok(current)
    }

    /// Stores `value` and returns it. Payload size is not enforced.
    pub fn apply_atomic_write_read(&mut self, table: &str, key: &[u8], value: &[u8]) -> Bytes {
        self.put(table, key.to_vec(), value.to_vec());
        self.get(table, key).cloned().expect("value just written")
    }
}

pub fn encode_counter(v: u64) -> Bytes {
    v.to_be_bytes().to_vec()
}

pub fn decode_counter(bytes: &[u8]) -> Option<u64> {
    <[u8; 8]>::try_from(bytes).ok().map(u64::from_be_bytes)
}

/// Stable 64-bit digest of arbitrary parts.
pub fn digest_parts(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_be_bytes(out[..8].try_into().unwrap())
}

pub fn value_digest(value: Option<&[u8]>) -> u64 {
    match value {
        None => 0,
        Some(v) => digest_parts(&[b"v", v]),
    }
}

/// Full replica state: lease record plus user tables, with an incrementally
/// maintained digest of the tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DataStore {
    pub lease: LeaseState,
    pub kv: KeyValueState,
    kv_digest: u64,
    /// Writes are only accepted from the client the lease record names.
    pub fence_writes: bool,
    /// Seeded mutation: `>=` in the lease validity test.
    pub(crate) inclusive_lease_guard: bool,
}

fn entry_digest(table: &str, key: &[u8], value: &[u8]) -> u64 {
    digest_parts(&[table.as_bytes(), key, value])
}

impl DataStore {
    pub fn new(fence_writes: bool) -> Self {
        DataStore { fence_writes, ..Default::default() }
    }

    pub fn with_inclusive_guard(mut self, on: bool) -> Self {
        self.inclusive_lease_guard = on;
        self
    }

    /// Digest of lease record and tables; equal states give equal digests.
    pub fn state_digest(&self) -> u64 {
        let primary = self.lease.primary.map(|p| p.to_string()).unwrap_or_default();
        let lease = digest_parts(&[primary.as_bytes(), &self.lease.lease_validity.0.to_be_bytes()]);
        lease ^ self.kv_digest
    }

    fn track_put(&mut self, table: &str, key: &[u8], old: Option<&[u8]>, new: Option<&[u8]>) {
        if let Some(o) = old {
            self.kv_digest ^= entry_digest(table, key, o);
        }
        if let Some(n) = new {
            self.kv_digest ^= entry_digest(table, key, n);
        }
    }

    /// Applies one ordered request.
    pub fn apply(&mut self, client: ProcessId, op: &DataStoreOp, ltime: LocalTime) -> OpReply {
        if let DataStoreOp::AcquireLease { id, lease_us } = op {
            let p = self.lease.acquire_with(*id, *lease_us, ltime, self.inclusive_lease_guard);
            return OpReply::Primary(p);
        }
        if self.fence_writes && op.is_write() && self.lease.primary != Some(client) {
            return OpReply::Rejected(OpError::Fenced { client, primary: self.lease.primary });
        }
        match op {
            DataStoreOp::Put { table, key, .. }
            | DataStoreOp::Remove { table, key }
            | DataStoreOp::ReadAndIncrement { table, key }
            | DataStoreOp::AtomicWriteRead { table, key, .. } => {
                let old = self.kv.get(table, key).cloned();
                let reply = match op {
                    DataStoreOp::ReadAndIncrement { .. } => match self.kv.apply_read_and_increment(table, key) {
                        Ok(v) => OpReply::Counter(v),
                        Err(e) => OpReply::Rejected(e),
                    },
                    DataStoreOp::AtomicWriteRead { value, .. } => {
                        OpReply::Value(Some(self.kv.apply_atomic_write_read(table, key, value)))
                    }
                    _ => self.kv.apply_kv(op),
                };
                let new = self.kv.get(table, key).cloned();
                self.track_put(table, key, old.as_deref(), new.as_deref());
                reply
            }
            DataStoreOp::Get { .. } | DataStoreOp::List { .. } => self.kv.apply_kv(op),
            DataStoreOp::AcquireLease { .. } => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const C1: ProcessId = ProcessId::controller(1);
    const C2: ProcessId = ProcessId::controller(2);
    const S: u64 = 1_000_000;

    fn lease(primary: Option<ProcessId>, validity_s: f64) -> LeaseState {
        LeaseState { primary, lease_validity: LocalTime::from_secs_f64(validity_s) }
    }

    #[test]
    fn initial_grant() {
        let mut st = LeaseState::default();
        assert_eq!(st, lease(None, 0.0));
        assert_eq!(st.acquire(C1, S, LocalTime(5 * S)), C1);
        assert_eq!(st, lease(Some(C1), 6.0));
    }

    #[test]
    fn valid_lease_refused_to_other() {
        let mut st = lease(Some(C1), 6.0);
        assert_eq!(st.acquire(C2, S, LocalTime::from_secs_f64(5.5)), C1);
        assert_eq!(st, lease(Some(C1), 6.0));
    }

    #[test]
    fn owner_renews() {
        let mut st = lease(Some(C1), 6.0);
        assert_eq!(st.acquire(C1, S, LocalTime::from_secs_f64(5.5)), C1);
        assert_eq!(st, lease(Some(C1), 6.5));
    }

    #[test]
    fn expiry_boundary_grants_takeover() {
        let mut st = lease(Some(C1), 6.0);
        assert_eq!(st.acquire(C2, S, LocalTime(6 * S)), C2);
        assert_eq!(st, lease(Some(C2), 7.0));
    }

    #[test]
    fn kv_basics() {
        let mut kv = KeyValueState::default();
        let get = |t: &str, k: &str| DataStoreOp::Get { table: t.into(), key: k.into() };
        assert_eq!(kv.apply_kv(&get("t", "k")), OpReply::Value(None));
        let put = |v: &str| DataStoreOp::Put { table: "t".into(), key: b"k".to_vec(), value: v.into() };
        assert_eq!(kv.apply_kv(&put("v1")), OpReply::Value(None));
        assert_eq!(kv.apply_kv(&put("v2")), OpReply::Value(Some(b"v1".to_vec())));
        assert_eq!(kv.apply_kv(&get("t", "k")), OpReply::Value(Some(b"v2".to_vec())));
        let rm = DataStoreOp::Remove { table: "t".into(), key: b"k".to_vec() };
        assert_eq!(kv.apply_kv(&rm), OpReply::Value(Some(b"v2".to_vec())));
        assert_eq!(kv.apply_kv(&rm), OpReply::Value(None));
        assert_eq!(kv, KeyValueState::default());
    }

    #[test]
    fn list_is_lexicographic() {
        let mut kv = KeyValueState::default();
        kv.put("t", b"b".to_vec(), vec![1]);
        kv.put("t", b"a".to_vec(), vec![2]);
        kv.put("u", b"c".to_vec(), vec![3]);
        assert_eq!(kv.apply_kv(&DataStoreOp::List { table: "t".into() }), OpReply::Keys(vec![b"a".to_vec(), b"b".to_vec()]));
        assert_eq!(kv.list("missing"), Vec::<Bytes>::new());
    }

    #[test]
    fn read_and_increment() {
        let mut kv = KeyValueState::default();
        assert_eq!(kv.apply_read_and_increment("t", b"n"), Ok(0));
        assert_eq!(kv.get("t", b"n"), Some(&encode_counter(1)));
        kv.put("t", b"n".to_vec(), encode_counter(41));
        assert_eq!(kv.apply_read_and_increment("t", b"n"), Ok(41));
        assert_eq!(kv.get("t", b"n"), Some(&encode_counter(42)));
        kv.put("t", b"x".to_vec(), b"abc".to_vec());
        let before = kv.clone();
        assert_eq!(kv.apply_read_and_increment("t", b"x"), Err(OpError::NotAnInteger));
        assert_eq!(kv, before);
    }

    #[test]
    fn atomic_write_read() {
        let mut kv = KeyValueState::default();
        let v1 = vec![7u8; DEFAULT_PAYLOAD_SIZE];
        let v2 = vec![9u8; DEFAULT_PAYLOAD_SIZE];
        assert_eq!(kv.apply_atomic_write_read("t", b"k", &v1), v1);
        assert_eq!(kv.get("t", b"k"), Some(&v1));
        assert_eq!(kv.apply_atomic_write_read("t", b"k", &v2), v2);
        assert_eq!(kv.get("t", b"k"), Some(&v2));
        // other sizes are accepted
        assert_eq!(kv.apply_atomic_write_read("t", b"k", b"short"), b"short".to_vec());
    }

    #[test]
    fn lease_record_is_not_listed() {
        let mut ds = DataStore::new(false);
        ds.apply(C1, &DataStoreOp::AcquireLease { id: C1, lease_us: S }, LocalTime(1));
        assert!(ds.kv.iter().next().is_none());
    }

    #[test]
    fn fencing_refuses_writes_from_non_primary() {
        let mut ds = DataStore::new(true);
        let put = DataStoreOp::Put { table: "t".into(), key: b"k".to_vec(), value: b"v".to_vec() };
        assert!(matches!(ds.apply(C1, &put, LocalTime(0)), OpReply::Rejected(OpError::Fenced { .. })));
        ds.apply(C1, &DataStoreOp::AcquireLease { id: C1, lease_us: S }, LocalTime(0));
        assert_eq!(ds.apply(C1, &put, LocalTime(1)), OpReply::Value(None));
        assert!(matches!(ds.apply(C2, &put, LocalTime(2)), OpReply::Rejected(_)));
        // reads are never fenced
        let get = DataStoreOp::Get { table: "t".into(), key: b"k".to_vec() };
        assert_eq!(ds.apply(C2, &get, LocalTime(3)), OpReply::Value(Some(b"v".to_vec())));
    }

    #[test]
    fn digest_tracks_content_not_history() {
        let mut a = DataStore::new(false);
        let mut b = DataStore::new(false);
        let put = |k: &str, v: &str| DataStoreOp::Put { table: "t".into(), key: k.into(), value: v.into() };
        a.apply(C1, &put("x", "1"), LocalTime(0));
        a.apply(C1, &put("y", "2"), LocalTime(0));
        b.apply(C1, &put("y", "0"), LocalTime(0));
        b.apply(C1, &put("x", "1"), LocalTime(0));
        assert_ne!(a.state_digest(), b.state_digest());
        b.apply(C1, &put("y", "2"), LocalTime(0));
        assert_eq!(a.state_digest(), b.state_digest());
        a.apply(C1, &DataStoreOp::Remove { table: "t".into(), key: b"x".to_vec() }, LocalTime(0));
        assert_ne!(a.state_digest(), b.state_digest());
    }
}
