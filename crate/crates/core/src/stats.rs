//! Per-thread instrumentation counters.
//!
//! Counting is compiled in for debug builds and with the `stats` feature;
//! otherwise every `bump` is a no-op and [`snapshot`] returns zeros.
//! Counters are thread-local so a test observes only its own thread's work.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

/// Whether counters are live in this build.
pub const ENABLED: bool = cfg!(any(debug_assertions, feature = "stats"));

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Counter {
    /// Atomic read-modify-write operations issued by `release`.
    ReleaseRmw,
    /// Successful compare-and-swap installs on the empty-list fast path.
    FastPathAcquire,
    /// Fast-path holders released by swinging the head back to null.
    FastPathRelease,
    /// Acquisitions that went through the list traversal.
    SlowPathAcquire,
    /// Nodes examined while looking for an insertion point.
    TraversalStep,
    /// Traversals restarted from the head because the link being followed was
    /// marked.
    Restart,
    /// Wait loops entered on a conflicting holder.
    WaitEntered,
    /// Post-insert validation failures (rw writers, or readers under writer
    /// preference).
    ValidationFailure,
    /// Marked nodes physically unlinked by this thread.
    Unlink,
    /// Nodes obtained from the system allocator.
    SystemAlloc,
    /// Nodes returned to the system allocator.
    SystemFree,
    /// Reclamation barriers completed.
    Barrier,
    /// Barriers abandoned after the wait budget ran out.
    BarrierTimeout,
    /// Range acquisitions issued by the skip list.
    SkipListLock,
}

const N_COUNTERS: usize = Counter::SkipListLock as usize + 1;

thread_local! {
    static COUNTERS: [Cell<u64>; N_COUNTERS] = const { [const { Cell::new(0) }; N_COUNTERS] };
}

/// Retired-node canary observations; global because any thread may trip it.
static CANARY_HITS: AtomicU64 = AtomicU64::new(0);

#[inline(always)]
pub fn bump(c: Counter) {
    add(c, 1);
}

#[inline(always)]
pub fn add(c: Counter, n: u64) {
    if ENABLED {
        let _ = COUNTERS.try_with(|cs| {
            let cell = &cs[c as usize];
            cell.set(cell.get() + n);
        });
    }
}

pub fn get(c: Counter) -> u64 {
    COUNTERS.try_with(|cs| cs[c as usize].get()).unwrap_or(0)
}

/// Zero this thread's counters.
pub fn reset() {
    let _ = COUNTERS.try_with(|cs| cs.iter().for_each(|c| c.set(0)));
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    values: [u64; N_COUNTERS],
}

impl Snapshot {
    pub fn get(&self, c: Counter) -> u64 {
        self.values[c as usize]
    }

    /// Counter deltas accumulated since `earlier`.
    pub fn since(&self, earlier: &Snapshot) -> Snapshot {
        let mut values = [0; N_COUNTERS];
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.values[i] - earlier.values[i];
        }
        Snapshot { values }
    }
}

pub fn snapshot() -> Snapshot {
    let mut values = [0; N_COUNTERS];
    let _ = COUNTERS.try_with(|cs| {
        for (v, c) in values.iter_mut().zip(cs.iter()) {
            *v = c.get();
        }
    });
    Snapshot { values }
}

pub(crate) fn canary_hit() {
    CANARY_HITS.fetch_add(1, Ordering::Relaxed);
}

/// Number of times any traversal read a poisoned (recycled) node.
pub fn canary_hits() -> u64 {
    CANARY_HITS.load(Ordering::Relaxed)
}
