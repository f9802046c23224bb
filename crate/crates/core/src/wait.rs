//! Polite busy-waiting.

use std::hint;
use std::thread;

/// How long a waiter spins with a CPU-relax hint before it starts yielding
/// its time slice to the scheduler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WaitPolicy {
    pub spin_limit: u32,
}

impl WaitPolicy {
    pub const DEFAULT_SPIN_LIMIT: u32 = 1 << 10;

    pub const fn new(spin_limit: u32) -> Self {
        WaitPolicy { spin_limit }
    }
}

impl Default for WaitPolicy {
    fn default() -> Self {
        WaitPolicy::new(Self::DEFAULT_SPIN_LIMIT)
    }
}

/// One waiting episode. Create a fresh `Backoff` for every wait loop.
pub struct Backoff {
    spins: u32,
    limit: u32,
}

impl Backoff {
    pub fn new(policy: WaitPolicy) -> Self {
        Backoff { spins: 0, limit: policy.spin_limit }
    }

    #[inline]
    pub fn pause(&mut self) {
        if self.spins < self.limit {
            self.spins += 1;
            hint::spin_loop();
        } else {
            thread::yield_now();
        }
    }

    pub fn spins(&self) -> u32 {
        self.spins
    }
}

/// Spin politely until `done` returns true.
#[inline]
pub fn wait_until(policy: WaitPolicy, mut done: impl FnMut() -> bool) {
    let mut backoff = Backoff::new(policy);
    while !done() {
        backoff.pause();
    }
}
