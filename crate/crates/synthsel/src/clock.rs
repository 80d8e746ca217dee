//! Wall-clock time for solver slices.

use std::time::Instant;

use synthsel_core::deadline::Deadline;
use synthsel_core::llm::Clock;

/// Seconds since construction.
#[derive(Clone, Copy, Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Expires once `clock` reaches `end`.
pub struct Until<'a> {
    pub clock: &'a dyn Clock,
    pub end: f64,
}

impl Deadline for Until<'_> {
    fn expired(&self) -> bool {
        self.clock.now() >= self.end
    }
}
