//! Starvation avoidance for the list locks.
//!
//! Acquirers normally bypass the gate after one relaxed read of the
//! `impatient` counter. A thread that fails `threshold` times announces
//! itself in `impatient`, takes the FIFO gate exclusively and finishes its
//! acquisition while newcomers queue on the gate in shared mode.
//!
//! What counts as a failure: a restart from the head, a wait on a
//! conflicting holder, or a failed post-insert validation.
//!
//! The gate is held only while acquiring, never across the critical section.
//! Holding one range of a fair lock while acquiring another from the same
//! lock can deadlock against an escalated thread and is not supported.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::list::{Budget, RangeGuard, RangeLock, RwRangeGuard, RwRangeLock};
use crate::range::{Mode, Range, RangeError};
use crate::wait::{wait_until, WaitPolicy};

pub const DEFAULT_PATIENCE: u32 = 16;

/// A patience of `NEVER` disables escalation.
pub const NEVER: u32 = u32::MAX;

/// FIFO ticket reader-writer lock. Each entrant takes a ticket; readers
/// pass the baton immediately after registering, a writer keeps it until
/// release.
#[derive(Debug, Default)]
struct TicketRwLock {
    next: AtomicU64,
    serving: AtomicU64,
    readers: AtomicU64,
}

impl TicketRwLock {
    fn read(&self, policy: WaitPolicy) {
        let t = self.next.fetch_add(1, Ordering::Relaxed);
        wait_until(policy, || self.serving.load(Ordering::Acquire) == t);
        self.readers.fetch_add(1, Ordering::SeqCst);
        self.serving.store(t + 1, Ordering::Release);
    }

    fn read_unlock(&self) {
        self.readers.fetch_sub(1, Ordering::Release);
    }

    fn write(&self, policy: WaitPolicy) {
        let t = self.next.fetch_add(1, Ordering::Relaxed);
        wait_until(policy, || self.serving.load(Ordering::Acquire) == t);
        wait_until(policy, || self.readers.load(Ordering::SeqCst) == 0);
    }

    fn write_unlock(&self) {
        self.serving.fetch_add(1, Ordering::Release);
    }
}

#[derive(Debug)]
pub struct FairnessGate {
    impatient: AtomicU32,
    gate: TicketRwLock,
    threshold: u32,
    policy: WaitPolicy,
    escalations: AtomicU64,
    gated_entries: AtomicU64,
    max_escalated_failures: AtomicU32,
}

impl Default for FairnessGate {
    fn default() -> Self {
        Self::new(DEFAULT_PATIENCE)
    }
}

impl FairnessGate {
    /// `threshold` of 0 is treated as 1.
    pub fn new(threshold: u32) -> Self {
        FairnessGate {
            impatient: AtomicU32::new(0),
            gate: TicketRwLock::default(),
            threshold: threshold.max(1),
            policy: WaitPolicy::default(),
            escalations: AtomicU64::new(0),
            gated_entries: AtomicU64::new(0),
            max_escalated_failures: AtomicU32::new(0),
        }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn impatient(&self) -> u32 {
        self.impatient.load(Ordering::Relaxed)
    }

    /// Acquisitions that escalated to the exclusive gate.
    pub fn escalations(&self) -> u64 {
        self.escalations.load(Ordering::Relaxed)
    }

    /// Acquisitions that took the gate in shared mode.
    pub fn gated_entries(&self) -> u64 {
        self.gated_entries.load(Ordering::Relaxed)
    }

    /// Largest number of failures any escalated acquisition still suffered
    /// while holding the gate exclusively.
    pub fn max_escalated_failures(&self) -> u32 {
        self.max_escalated_failures.load(Ordering::Relaxed)
    }

    fn guarded<G>(&self, mut attempt: impl FnMut(&mut Budget) -> Result<G, ()>) -> G {
        let limit = if self.threshold == NEVER { u32::MAX } else { self.threshold };
        if self.impatient.load(Ordering::Relaxed) == 0 {
            if let Ok(g) = attempt(&mut Budget::new(limit)) {
                return g;
            }
        } else {
            self.gated_entries.fetch_add(1, Ordering::Relaxed);
            self.gate.read(self.policy);
            let r = attempt(&mut Budget::new(limit));
            self.gate.read_unlock();
            if let Ok(g) = r {
                return g;
            }
        }
        self.impatient.fetch_add(1, Ordering::SeqCst);
        self.gate.write(self.policy);
        self.escalations.fetch_add(1, Ordering::Relaxed);
        let mut budget = Budget::unlimited();
        let g = attempt(&mut budget).unwrap_or_else(|_| unreachable!("unlimited budget"));
        self.max_escalated_failures.fetch_max(budget.failures(), Ordering::Relaxed);
        self.gate.write_unlock();
        self.impatient.fetch_sub(1, Ordering::SeqCst);
        g
    }
}

/// A list lock wrapped in a [`FairnessGate`].
#[derive(Debug)]
pub struct FairRangeLock<L> {
    inner: L,
    gate: FairnessGate,
}

impl<L: Default> Default for FairRangeLock<L> {
    fn default() -> Self {
        FairRangeLock { inner: L::default(), gate: FairnessGate::default() }
    }
}

impl<L> FairRangeLock<L> {
    pub fn new(inner: L, threshold: u32) -> Self {
        FairRangeLock { inner, gate: FairnessGate::new(threshold) }
    }

    pub fn gate(&self) -> &FairnessGate {
        &self.gate
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl FairRangeLock<RangeLock> {
    pub fn lock(&self, range: &Range) -> RangeGuard<'_> {
        self.gate.guarded(|b| self.inner.lock_bounded(range, b).map_err(drop))
    }

    pub fn acquire(&self, start: u64, end: u64) -> Result<RangeGuard<'_>, RangeError> {
        Ok(self.lock(&Range::write(start, end)?))
    }
}

impl FairRangeLock<RwRangeLock> {
    pub fn lock(&self, range: &Range) -> RwRangeGuard<'_> {
        self.gate.guarded(|b| self.inner.lock_bounded(range, b).map_err(drop))
    }

    pub fn acquire(&self, start: u64, end: u64, mode: Mode) -> Result<RwRangeGuard<'_>, RangeError> {
        Ok(self.lock(&Range::new(start, end, mode)?))
    }
}

impl crate::RangeLocking for FairRangeLock<RangeLock> {
    type Guard<'a> = RangeGuard<'a>;

    fn lock_range(&self, range: &Range) -> RangeGuard<'_> {
        self.lock(range)
    }

    fn shared_mode(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str {
        "list-ex-fair"
    }
}

impl crate::RangeLocking for FairRangeLock<RwRangeLock> {
    type Guard<'a> = RwRangeGuard<'a>;

    fn lock_range(&self, range: &Range) -> RwRangeGuard<'_> {
        self.lock(range)
    }

    fn shared_mode(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "list-rw-fair"
    }
}
