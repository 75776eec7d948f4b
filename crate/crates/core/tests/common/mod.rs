//! Oracles shared by the store tests and the acceptance run.
#![allow(dead_code)]

use ftsdn::datastore::{decode_counter, encode_counter, DataStore, DataStoreOp, LeaseState, OpError, OpReply};
use ftsdn::ids::ProcessId;
use ftsdn::simcore::LocalTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C1: ProcessId = ProcessId::controller(1);
pub const C2: ProcessId = ProcessId::controller(2);

/// Line-by-line interpreter: `primary <- null; lease_validity <- 0`, then per
/// request `if lease_validity > ltime { if primary = id { renew } } else
/// { primary <- id; renew }; return primary`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    primary: Option<ProcessId>,
    lease_validity: u64,
}

impl Reference {
    fn new() -> Self {
        Reference { primary: None, lease_validity: 0 }
    }

    fn acquire_lease(&mut self, id: ProcessId, l: u64, ltime: u64) -> Option<ProcessId> {
        if self.lease_validity > ltime {
            if self.primary == Some(id) {
                self.lease_validity = ltime + l;
            }
        } else {
            self.primary = Some(id);
            self.lease_validity = ltime + l;
        }
        self.primary
    }
}

pub type Step = (ProcessId, u64, u64);

/// Walks every sequence of up to `depth` more steps from the given states,
/// comparing after each step. Returns (sequences checked, mismatches).
pub fn explore(r: Reference, lease: LeaseState, store: &DataStore, last_ltime: u64, depth: usize, path: &mut Vec<Step>, mism: &mut Vec<Vec<Step>>) -> u64 {
    let mut checked = 1;
    if depth == 0 {
        return checked;
    }
    for id in [C1, C2] {
        for l in [1u64, 2] {
            for ltime in last_ltime..=5 {
                let mut r2 = r;
                let mut lease2 = lease;
                let mut store2 = store.clone();
                let want = r2.acquire_lease(id, l, ltime);
                let got = lease2.acquire(id, l, LocalTime(ltime));
                let via_store = store2.apply(id, &DataStoreOp::AcquireLease { id, lease_us: l }, LocalTime(ltime));
                path.push((id, l, ltime));
                let same_state = r2.primary == lease2.primary
                    && r2.lease_validity == lease2.lease_validity.0
                    && store2.lease == lease2;
                if want != Some(got) || via_store != OpReply::Primary(got) || !same_state {
                    mism.push(path.clone());
                }
                checked += explore(r2, lease2, &store2, ltime, depth - 1, path, mism);
                path.pop();
            }
        }
    }
    checked
}

/// Runs the exhaustive comparison; returns (sequences checked, expected count, mismatching sequences).
pub fn acquire_lease_exhaustive() -> (u64, u64, Vec<Vec<Step>>) {
    let mut mism = Vec::new();
    let checked = explore(Reference::new(), LeaseState::default(), &DataStore::new(false), 0, 6, &mut Vec::new(), &mut mism);
    // Non-decreasing ltime sequences over 0..=5 with four (id, L) choices per step.
    let expected: u64 = (0..=6u32).map(|n| binomial(5 + n as u64, n as u64) * 4u64.pow(n)).sum();
    (checked, expected, mism)
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

pub fn random_store(rng: &mut ChaCha8Rng) -> DataStore {
    let mut ds = DataStore::new(false);
    for _ in 0..rng.gen_range(0..6) {
        let table = ["t", "u"][rng.gen_range(0..2)].to_string();
        let key = vec![b'k', rng.gen_range(0..3u8)];
        let value = match rng.gen_range(0..4) {
            0 => vec![rng.gen(); rng.gen_range(0..12)],
            1 => encode_counter(u64::MAX),
            _ => encode_counter(rng.gen_range(0..1_000)),
        };
        ds.apply(C1, &DataStoreOp::Put { table, key, value }, LocalTime(0));
    }
    ds
}

/// Compares ReadAndIncrement against Get followed by Put on `n` random
/// small states; returns the number of mismatches.
pub fn read_and_increment_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..n {
        let base = random_store(&mut rng);
        let table = ["t", "u", "absent"][rng.gen_range(0..3)].to_string();
        let key = vec![b'k', rng.gen_range(0..3u8)];

        let mut atomic = base.clone();
        let got = atomic.apply(C1, &DataStoreOp::ReadAndIncrement { table: table.clone(), key: key.clone() }, LocalTime(0));

        let mut seq = base.clone();
        let want = match seq.apply(C1, &DataStoreOp::Get { table: table.clone(), key: key.clone() }, LocalTime(0)) {
            OpReply::Value(None) => Some(0),
            OpReply::Value(Some(v)) => decode_counter(&v),
            r => panic!("unexpected {r:?}"),
        };
        let want = match want {
            Some(n) => {
                seq.apply(C1, &DataStoreOp::Put { table, key, value: encode_counter(n.wrapping_add(1)) }, LocalTime(0));
                OpReply::Counter(n)
            }
            None => OpReply::Rejected(OpError::NotAnInteger),
        };
        if got != want || atomic != seq || atomic.state_digest() != seq.state_digest() {
            mismatches += 1;
        }
    }
    mismatches
}

