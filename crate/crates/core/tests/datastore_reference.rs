//! The store's lease primitive against a literal transcription of the
//! published pseudocode, plus the compound-operation and log invariants.

mod common;

use common::C1;
use ftsdn::datastore::{DataStore, DataStoreOp, OpError, OpReply};
use ftsdn::ids::ProcessId;
use ftsdn::simcore::LocalTime;
use proptest::prelude::*;

#[test]
fn acquire_lease_matches_reference_exhaustively() {
    let (checked, expected, mism) = common::acquire_lease_exhaustive();
    assert_eq!(checked, expected);
    assert!(mism.is_empty(), "{} mismatches, first {:?}", mism.len(), mism.first());
}

#[test]
fn read_and_increment_is_get_then_put() {
    assert_eq!(common::read_and_increment_mismatches(100_000, 0x5EED), 0);
}

fn op_strategy() -> impl Strategy<Value = (u8, DataStoreOp, u64)> {
    let key = prop::collection::vec(0u8..3, 1..3);
    let val = prop::collection::vec(any::<u8>(), 0..10);
    let table = prop::sample::select(vec!["t".to_string(), "u".to_string()]);
    let op = prop_oneof![
        (0u16..3, 1u64..5).prop_map(|(c, l)| DataStoreOp::AcquireLease { id: ProcessId::controller(c), lease_us: l }),
        (table.clone(), key.clone(), val.clone()).prop_map(|(table, key, value)| DataStoreOp::Put { table, key, value }),
        (table.clone(), key.clone()).prop_map(|(table, key)| DataStoreOp::Get { table, key }),
        (table.clone(), key.clone()).prop_map(|(table, key)| DataStoreOp::Remove { table, key }),
        table.clone().prop_map(|table| DataStoreOp::List { table }),
        (table.clone(), key.clone()).prop_map(|(table, key)| DataStoreOp::ReadAndIncrement { table, key }),
        (table, key, val).prop_map(|(table, key, value)| DataStoreOp::AtomicWriteRead { table, key, value }),
    ];
    (0u8..3, op, 0u64..3)
}

proptest! {
    /// Replaying a log gives the same replies and digests. Validity only
    /// falls when the holder renews with a shorter L. A new holder is only
    /// granted once the previous lease has expired at the stamping time.
    #[test]
    fn log_invariants(log in prop::collection::vec(op_strategy(), 0..60), fence in any::<bool>()) {
        let mut a = DataStore::new(fence);
        let mut b = DataStore::new(fence);
        let mut ltime = 0u64;
        for (client, op, dt) in &log {
            ltime += dt;
            let client = ProcessId::controller(*client as u16);
            let before = a.lease;
            let ra = a.apply(client, op, LocalTime(ltime));
            let rb = b.apply(client, op, LocalTime(ltime));
            prop_assert_eq!(&ra, &rb);
            prop_assert_eq!(a.state_digest(), b.state_digest());
            if a.lease.lease_validity < before.lease_validity {
                // Only the holder can shorten its own lease, by renewing with a smaller L.
                let shrinking_renewal = matches!(op, DataStoreOp::AcquireLease { id, lease_us }
                    if before.primary == Some(*id) && ltime + lease_us < before.lease_validity.0);
                prop_assert!(shrinking_renewal, "validity fell from {:?} to {:?}", before, a.lease);
            }
            if before.primary.is_some() && a.lease.primary != before.primary {
                prop_assert!(before.lease_validity.0 <= ltime);
            }
            if fence && op.is_write() && before.primary != Some(client) && !matches!(op, DataStoreOp::AcquireLease { .. }) {
                prop_assert!(matches!(ra, OpReply::Rejected(OpError::Fenced { .. })), "unfenced write {:?}", ra);
            }
        }
    }

    /// The incrementally maintained digest matches one built from scratch.
    #[test]
    fn digest_tracks_contents(log in prop::collection::vec(op_strategy(), 0..40)) {
        let mut ds = DataStore::new(false);
        for (_, op, _) in &log {
            ds.apply(C1, op, LocalTime(0));
        }
        let mut rebuilt = DataStore::new(false);
        for (t, k, v) in ds.kv.iter() {
            rebuilt.apply(C1, &DataStoreOp::Put { table: t.to_string(), key: k.clone(), value: v.clone() }, LocalTime(0));
        }
        rebuilt.lease = ds.lease;
        prop_assert_eq!(ds.state_digest(), rebuilt.state_digest());
    }
}
