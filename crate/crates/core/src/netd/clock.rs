//! Time sources for the daemon and the card terminal.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::primitives::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Wall clock, clamped so that it never runs backwards within the process.
#[derive(Debug, Default)]
pub struct SystemClock {
    last: AtomicU64,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let prev = self.last.fetch_max(wall, Ordering::AcqRel);
        Timestamp::from_secs(prev.max(wall))
    }
}

/// Test clock: reads whatever was last set. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClock {
    secs: Arc<AtomicU64>,
}

impl ScriptedClock {
    pub fn new(start: Timestamp) -> Self {
        ScriptedClock { secs: Arc::new(AtomicU64::new(start.secs())) }
    }

    pub fn set(&self, t: Timestamp) {
        self.secs.store(t.secs(), Ordering::SeqCst);
    }

    pub fn advance(&self, secs: u64) -> Timestamp {
        Timestamp::from_secs(self.secs.fetch_add(secs, Ordering::SeqCst) + secs)
    }
}

impl Clock for ScriptedClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_secs(self.secs.load(Ordering::SeqCst))
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_clock_is_shared_between_clones() {
        let a = ScriptedClock::new(Timestamp::from_secs(10));
        let b = a.clone();
        assert_eq!(a.advance(5), Timestamp::from_secs(15));
        assert_eq!(b.now(), Timestamp::from_secs(15));
        b.set(Timestamp::from_secs(3));
        assert_eq!(a.now(), Timestamp::from_secs(3));
    }

    #[test]
    fn system_clock_is_monotone() {
        let c = SystemClock::new();
        let a = c.now();
        let b = c.now();
        assert!(b >= a);
        assert!(a.secs() > 1_600_000_000);
    }
}
