use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::interval_tree::IntervalTree;
use super::ttas::TtasLock;
use crate::range::{Mode, Range, RangeError};
use crate::wait::{wait_until, WaitPolicy};

struct Entry {
    reader: bool,
    blockers: Arc<AtomicU32>,
}

struct Inner {
    tree: IntervalTree<Entry>,
    next_seq: u64,
}

/// Range tree under a spin lock.
///
/// An acquirer counts the incompatible ranges already in the tree, whether
/// held or still waiting, inserts itself and waits (outside the spin lock)
/// until that count drops to zero. Releasing decrements the count of every
/// later incompatible overlapping entry, so ranges are granted in arrival
/// order among overlapping requests.
pub struct TreeRangeLock {
    inner: TtasLock<Inner>,
    shared: bool,
    wait: WaitPolicy,
}

impl TreeRangeLock {
    /// Exclusive variant: every overlap conflicts.
    pub fn exclusive() -> Self {
        Self::build(false)
    }

    /// Reader-writer variant: overlapping readers do not block each other.
    pub fn reader_writer() -> Self {
        Self::build(true)
    }

    fn build(shared: bool) -> Self {
        TreeRangeLock {
            inner: TtasLock::new(Inner { tree: IntervalTree::new(), next_seq: 0 }),
            shared,
            wait: WaitPolicy::default(),
        }
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    fn conflicts(&self, a_reader: bool, b_reader: bool) -> bool {
        !(self.shared && a_reader && b_reader)
    }

    pub fn acquire(&self, start: u64, end: u64, mode: Mode) -> Result<TreeGuard<'_>, RangeError> {
        Ok(self.lock(&Range::new(start, end, mode)?))
    }

    pub fn lock(&self, range: &Range) -> TreeGuard<'_> {
        let guard = self.enqueue(range);
        wait_until(self.wait, || guard.blockers.load(Ordering::Acquire) == 0);
        guard
    }

    /// Insert the request without waiting for it to be granted.
    fn enqueue(&self, range: &Range) -> TreeGuard<'_> {
        let reader = self.shared && range.mode().is_reader();
        let (start, end) = (range.start(), range.end());
        let mut inner = self.inner.lock();
        let mut count = 0;
        inner.tree.for_each_overlap(start, end, |_, _, _, e| {
            if self.conflicts(e.reader, reader) {
                count += 1;
            }
        });
        let seq = inner.next_seq;
        inner.next_seq += 1;
        let blockers = Arc::new(AtomicU32::new(count));
        inner.tree.insert(start, seq, end, Entry { reader, blockers: blockers.clone() });
        TreeGuard { lock: self, start, end, seq, reader, blockers }
    }

    fn unlock(&self, g: &TreeGuard<'_>) {
        let mut inner = self.inner.lock();
        inner.tree.remove(g.start, g.seq).expect("released range missing from tree");
        inner.tree.for_each_overlap(g.start, g.end, |_, seq, _, e| {
            if seq > g.seq && self.conflicts(e.reader, g.reader) {
                e.blockers.fetch_sub(1, Ordering::Release);
            }
        });
    }

    /// Entries currently in the tree, granted or waiting.
    pub fn len(&self) -> usize {
        self.inner.lock().tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self) -> Result<(), String> {
        self.inner.lock().tree.check()
    }
}

#[must_use = "the range is released as soon as the guard is dropped"]
pub struct TreeGuard<'a> {
    lock: &'a TreeRangeLock,
    start: u64,
    end: u64,
    seq: u64,
    reader: bool,
    blockers: Arc<AtomicU32>,
}

impl TreeGuard<'_> {
    pub fn range(&self) -> Range {
        let mode = if self.reader { Mode::Reader } else { Mode::Writer };
        Range::new(self.start, self.end, mode).expect("guard holds a valid range")
    }

    pub fn is_granted(&self) -> bool {
        self.blockers.load(Ordering::Acquire) == 0
    }
}

impl Drop for TreeGuard<'_> {
    fn drop(&mut self) {
        self.lock.unlock(self);
    }
}

impl std::fmt::Debug for TreeGuard<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("TreeGuard").field(&self.range()).finish()
    }
}
