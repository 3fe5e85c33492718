use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

/// Source of "now", in seconds since the scenario epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Clock that only moves when told to. Used by the simulator and tests.
#[derive(Debug)]
pub struct ManualClock {
    bits: AtomicU64,
}

impl ManualClock {
    pub fn new(t: f64) -> Self {
        ManualClock {
            bits: AtomicU64::new(t.to_bits()),
        }
    }

    pub fn set(&self, t: f64) {
        self.bits.store(t.to_bits(), Ordering::SeqCst);
    }

    pub fn advance(&self, dt: f64) {
        // Single writer in practice; a CAS loop keeps it correct regardless.
        let _ = self
            .bits
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| Some((f64::from_bits(b) + dt).to_bits()));
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock::new(0.0)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::SeqCst))
    }
}

/// Monotonic wall time, starting at `epoch_offset` when created.
#[derive(Debug)]
pub struct WallClock {
    start: Instant,
    epoch_offset: f64,
}

impl WallClock {
    pub fn new(epoch_offset: f64) -> Self {
        WallClock {
            start: Instant::now(),
            epoch_offset,
        }
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.epoch_offset + self.start.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_moves_only_when_told() {
        let c = ManualClock::new(1.5);
        assert_eq!(c.now(), 1.5);
        c.advance(0.25);
        assert_eq!(c.now(), 1.75);
        c.set(10.0);
        assert_eq!(c.now(), 10.0);
    }

    #[test]
    fn wall_clock_is_monotone() {
        let c = WallClock::new(100.0);
        let a = c.now();
        let b = c.now();
        assert!(a >= 100.0 && b >= a);
    }
}
