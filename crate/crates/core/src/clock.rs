//! Time source for transcripts and audit records.
//!
//! Replay tests need byte-identical transcripts, so every timestamp in the
//! engine goes through a [`Clock`] instead of reading the system time.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that starts at a fixed instant and advances one
/// second per reading.
#[derive(Debug)]
pub struct SteppingClock {
    next_secs: AtomicI64,
}

impl SteppingClock {
    pub fn starting_at(start: DateTime<Utc>) -> Self {
        Self { next_secs: AtomicI64::new(start.timestamp()) }
    }

    /// 2025-01-01T00:00:00Z, the epoch used by the recorded fixtures.
    pub fn fixture() -> Self {
        Self::starting_at(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next_secs.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).single().expect("timestamp in range")
    }
}
