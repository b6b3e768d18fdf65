use std::sync::atomic::{AtomicU64, Ordering};

/// Source of timestamps (seconds since the Unix epoch) for reports and
/// persisted records.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default()
    }
}

/// Deterministic clock: starts at `start` and advances by one second per read.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicU64,
}

impl StepClock {
    pub fn new(start: u64) -> Self {
        Self {
            next: AtomicU64::new(start),
        }
    }
}

impl Clock for StepClock {
    fn now(&self) -> u64 {
        self.next.fetch_add(1, Ordering::SeqCst)
    }
}
