use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::ids::ProcessId;

/// Parts-per-billion denominator used for clock rates.
pub const PPB: i64 = 1_000_000_000;

/// Hidden real time of the simulation, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalTime(pub u64);

/// A reading of some process's local clock, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalTime(pub u64);

macro_rules! time_arith {
    ($t:ident) => {
        impl Add<u64> for $t {
            type Output = $t;
            fn add(self, rhs: u64) -> $t {
                $t(self.0.saturating_add(rhs))
            }
        }

        impl Sub for $t {
            type Output = u64;
            fn sub(self, rhs: $t) -> u64 {
                self.0.saturating_sub(rhs.0)
            }
        }

        impl $t {
            pub const ZERO: $t = $t(0);

            pub fn as_micros(self) -> u64 {
                self.0
            }

            pub fn from_secs_f64(s: f64) -> $t {
                $t((s * 1e6).round() as u64)
            }

            pub fn as_secs_f64(self) -> f64 {
                self.0 as f64 / 1e6
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:.6}s", self.as_secs_f64())
            }
        }
    };
}

time_arith!(GlobalTime);
time_arith!(LocalTime);

/// Constant-rate drifting clock: `local = offset + now * (1 + rate_ppb / 1e9)`.
///
/// Readings are floored to whole microseconds, so they are monotone in the
/// global time and deviate from the exact rational value by less than 1 µs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalClock {
    pub owner: ProcessId,
    /// Drift in parts per billion; the rate is `1 + rate_ppb / 1e9`.
    pub rate_ppb: i64,
    pub offset_us: u64,
}

impl LocalClock {
    pub fn new(owner: ProcessId, rate_ppb: i64, offset_us: u64) -> Self {
        assert!(rate_ppb.abs() < PPB, "clock rate must stay positive");
        LocalClock { owner, rate_ppb, offset_us }
    }

    pub fn ideal(owner: ProcessId) -> Self {
        LocalClock::new(owner, 0, 0)
    }

    pub fn drift_rate(&self) -> f64 {
        1.0 + self.rate_ppb as f64 / PPB as f64
    }

    pub fn read(&self, now: GlobalTime) -> LocalTime {
        let n = now.0 as i128;
        let scaled = (n * (PPB + self.rate_ppb) as i128).div_euclid(PPB as i128);
        LocalTime(self.offset_us + scaled as u64)
    }

    /// Global duration needed for this clock to advance by `local_us`,
    /// rounded up to the next microsecond.
    pub fn global_duration(&self, local_us: u64) -> u64 {
        let num = local_us as i128 * PPB as i128;
        let den = (PPB + self.rate_ppb) as i128;
        ((num + den - 1) / den) as u64
    }

    /// Earliest global instant at which the clock reads at least `local`.
    /// This is the checker's C() mapping.
    pub fn to_global(&self, local: LocalTime) -> GlobalTime {
        if local.0 <= self.offset_us {
            return GlobalTime::ZERO;
        }
        let target = (local.0 - self.offset_us) as i128;
        let den = (PPB + self.rate_ppb) as i128;
        // smallest n with floor(n * den / PPB) >= target
        let mut n = (target * PPB as i128 + den - 1) / den;
        while n > 0 && self.read(GlobalTime((n - 1) as u64)) >= local {
            n -= 1;
        }
        while self.read(GlobalTime(n as u64)) < local {
            n += 1;
        }
        GlobalTime(n as u64)
    }
}
