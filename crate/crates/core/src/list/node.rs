use std::ptr::NonNull;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crate::range::{Mode, Range};
use crate::stats;

/// Value written into both bounds of a node whose grace period has elapsed.
/// A live node always has `start < end`, so `start == end` identifies it.
pub(crate) const CANARY: u64 = 0xDEAD_BEEF_DEAD_BEEF;

/// One acquired range in a lock's list. The low bit of `next` is the
/// logical-deletion mark.
///
/// Bounds are atomics so that stale readers of a recycled node (a bug the
/// poisoning harness looks for) are a detectable logic error rather than UB.
#[repr(align(8))]
pub(crate) struct Node {
    start: AtomicU64,
    end: AtomicU64,
    reader: AtomicBool,
    pub(crate) next: AtomicUsize,
}

pub(crate) type NodePtr = NonNull<Node>;

#[inline]
pub(crate) fn is_marked(word: usize) -> bool {
    word & 1 == 1
}

#[inline]
pub(crate) fn unmark(word: usize) -> usize {
    word & !1
}

#[inline]
pub(crate) fn mark(word: usize) -> usize {
    word | 1
}

impl Node {
    pub(crate) fn boxed() -> NodePtr {
        stats::bump(stats::Counter::SystemAlloc);
        let b = Box::new(Node {
            start: AtomicU64::new(CANARY),
            end: AtomicU64::new(CANARY),
            reader: AtomicBool::new(false),
            next: AtomicUsize::new(0),
        });
        NonNull::from(Box::leak(b))
    }

    /// # Safety
    /// `ptr` must come from [`Node::boxed`] and be unreachable by every thread.
    pub(crate) unsafe fn free(ptr: NodePtr) {
        stats::bump(stats::Counter::SystemFree);
        drop(Box::from_raw(ptr.as_ptr()));
    }

    pub(crate) fn init(&self, range: &Range) {
        self.start.store(range.start(), Ordering::Relaxed);
        self.end.store(range.end(), Ordering::Relaxed);
        self.reader.store(range.mode().is_reader(), Ordering::Relaxed);
        self.next.store(0, Ordering::Relaxed);
    }

    pub(crate) fn poison(&self) {
        self.start.store(CANARY, Ordering::Relaxed);
        self.end.store(CANARY, Ordering::Relaxed);
    }

    #[inline]
    pub(crate) fn bounds(&self) -> (u64, u64) {
        let s = self.start.load(Ordering::Relaxed);
        let e = self.end.load(Ordering::Relaxed);
        if cfg!(debug_assertions) && s == e {
            stats::canary_hit();
        }
        (s, e)
    }

    #[inline]
    pub(crate) fn start(&self) -> u64 {
        self.bounds().0
    }

    #[inline]
    pub(crate) fn end(&self) -> u64 {
        self.bounds().1
    }

    #[inline]
    pub(crate) fn is_reader(&self) -> bool {
        self.reader.load(Ordering::Relaxed)
    }

    pub(crate) fn range(&self) -> Range {
        let (s, e) = self.bounds();
        let mode = if self.is_reader() { Mode::Reader } else { Mode::Writer };
        Range::new(s, e, mode).expect("node holds a poisoned range")
    }
}

/// Dereference a list word. The mark bit must already be stripped.
///
/// # Safety
/// The caller must be inside an epoch-protected traversal (or own the node).
#[inline]
pub(crate) unsafe fn node_ref<'a>(word: usize) -> &'a Node {
    debug_assert!(word != 0 && !is_marked(word));
    &*(word as *const Node)
}
