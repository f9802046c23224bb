//! Scalable range locks.
//!
//! The core of the crate is a pair of list-based range locks: [`RangeLock`]
//! (exclusive) and [`RwRangeLock`] (reader-writer). Both keep acquired ranges
//! in a lock-free sorted linked list, release with a single atomic
//! increment, take a one-CAS fast path when uncontended and recycle list
//! nodes through per-thread pools guarded by epochs ([`reclaim`]).
//! [`fairness::FairRangeLock`] layers an impatience counter and a fair gate
//! on top to bound starvation.
//!
//! For comparison the crate ships the classic designs in [`baseline`]: a
//! range tree under a spin lock and a fixed segment array of rw locks.
//! [`skiplist::RangeSkipList`] and [`vma::AddressSpace`] are two clients
//! built on the locks.

pub mod baseline;
pub mod fairness;
pub mod list;
pub mod range;
pub mod reclaim;
pub mod skiplist;
pub mod stats;
pub mod testkit;
pub mod vma;
pub mod wait;

pub use fairness::{FairRangeLock, FairnessGate};
pub use list::{ListConfig, Preference, RangeGuard, RangeLock, RwRangeGuard, RwRangeLock};
pub use range::{Mode, Placement, Range, RangeError};
pub use wait::WaitPolicy;

/// Common interface over every range lock in the crate, so workloads and
/// test harnesses can be written once.
pub trait RangeLocking: Send + Sync {
    type Guard<'a>
    where
        Self: 'a;

    /// Acquire `range` in its mode. Locks without shared mode treat readers
    /// as writers.
    fn lock_range(&self, range: &Range) -> Self::Guard<'_>;

    /// Whether overlapping readers may hold concurrently.
    fn shared_mode(&self) -> bool;

    /// Short identifier, e.g. `list-rw`.
    fn name(&self) -> &'static str;
}

impl RangeLocking for RangeLock {
    type Guard<'a> = RangeGuard<'a>;

    fn lock_range(&self, range: &Range) -> RangeGuard<'_> {
        self.lock(range)
    }

    fn shared_mode(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str {
        "list-ex"
    }
}

impl RangeLocking for RwRangeLock {
    type Guard<'a> = RwRangeGuard<'a>;

    fn lock_range(&self, range: &Range) -> RwRangeGuard<'_> {
        self.lock(range)
    }

    fn shared_mode(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "list-rw"
    }
}

impl RangeLocking for baseline::TreeRangeLock {
    type Guard<'a> = baseline::TreeGuard<'a>;

    fn lock_range(&self, range: &Range) -> baseline::TreeGuard<'_> {
        self.lock(range)
    }

    fn shared_mode(&self) -> bool {
        self.is_shared()
    }

    fn name(&self) -> &'static str {
        if self.is_shared() {
            "kernel-rw"
        } else {
            "lustre-ex"
        }
    }
}

/// Ranges reaching past the span are clipped to it, so the full range locks
/// every segment.
///
/// # Panics
/// If the range starts at or beyond the span.
impl RangeLocking for baseline::SegmentRangeLock {
    type Guard<'a> = baseline::SegmentGuard<'a>;

    fn lock_range(&self, range: &Range) -> baseline::SegmentGuard<'_> {
        let end = range.end().min(self.span());
        let clipped = Range::new(range.start(), end, range.mode()).expect("range starts beyond the span");
        self.lock(&clipped).expect("clipped range is within the span")
    }

    fn shared_mode(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "pnova-rw"
    }
}
