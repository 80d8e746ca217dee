//! Cooperative cancellation for long-running searches.

use core::cell::Cell;

/// Polled by searches at least once per unit of work.
pub trait Deadline {
    fn expired(&self) -> bool;
}

/// Never expires.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoDeadline;

impl Deadline for NoDeadline {
    fn expired(&self) -> bool {
        false
    }
}

/// Expires after a fixed number of polls. Deterministic, for tests.
#[derive(Debug)]
pub struct PollBudget {
    left: Cell<u64>,
}

impl PollBudget {
    pub fn new(polls: u64) -> Self {
        PollBudget { left: Cell::new(polls) }
    }
}

impl Deadline for PollBudget {
    fn expired(&self) -> bool {
        let n = self.left.get();
        if n == 0 {
            return true;
        }
        self.left.set(n - 1);
        false
    }
}

impl<F: Fn() -> bool> Deadline for F {
    fn expired(&self) -> bool {
        self()
    }
}
