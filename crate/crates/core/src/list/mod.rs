//! List-based range locks.
//!
//! Acquired ranges live in a singly linked list sorted by start address.
//! Acquisition walks the list without any auxiliary lock, waits on
//! conflicting entries until their owner marks them deleted, and installs
//! its own node with one compare-and-swap. Release sets the low bit of the
//! node's `next` word; marked nodes are unlinked by later traversals and
//! recycled through [`crate::reclaim`].
//!
//! When the list is empty an acquisition installs a mark-tagged pointer to
//! its node directly in `head` (the fast path) and a matching release swings
//! `head` back to null.

pub(crate) mod node;

mod exclusive;
mod rw;

pub use exclusive::{RangeGuard, RangeLock};
pub use rw::{RwRangeGuard, RwRangeLock};

use std::ptr;
use std::sync::atomic::{fence, AtomicUsize, Ordering};

use node::{is_marked, mark, node_ref, unmark, Node, NodePtr};

use crate::range::{compare_bounds_exclusive, compare_bounds_rw, Placement, Range};
use crate::reclaim;
use crate::stats::{self, Counter};
use crate::wait::{wait_until, WaitPolicy};

/// Which side stays in the list when a reader and a writer race past each
/// other during insertion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preference {
    /// Readers stay; the conflicting writer deletes itself and retries.
    #[default]
    Reader,
    /// Writers stay and wait; the conflicting reader deletes itself and retries.
    Writer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ListConfig {
    pub fast_path: bool,
    pub wait: WaitPolicy,
    pub preference: Preference,
}

impl Default for ListConfig {
    fn default() -> Self {
        ListConfig { fast_path: true, wait: WaitPolicy::default(), preference: Preference::Reader }
    }
}

impl ListConfig {
    pub fn fast_path(mut self, on: bool) -> Self {
        self.fast_path = on;
        self
    }

    pub fn wait(mut self, policy: WaitPolicy) -> Self {
        self.wait = policy;
        self
    }

    pub fn preference(mut self, p: Preference) -> Self {
        self.preference = p;
        self
    }
}

/// One entry of a quiescent list walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotEntry {
    pub range: Range,
    pub marked: bool,
}

/// Counts failed attempts against an optional limit.
#[derive(Debug)]
pub(crate) struct Budget {
    limit: u32,
    failures: u32,
}

impl Budget {
    pub(crate) fn new(limit: u32) -> Self {
        Budget { limit, failures: 0 }
    }

    pub(crate) fn unlimited() -> Self {
        Budget::new(u32::MAX)
    }

    /// Record one failure; true once the limit is reached.
    fn fail(&mut self) -> bool {
        self.failures = self.failures.saturating_add(1);
        self.failures >= self.limit
    }

    pub(crate) fn failures(&self) -> u32 {
        self.failures
    }
}

/// Attempt budget ran out before the range was acquired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Exhausted;

enum Insert {
    Acquired,
    ValidationFailed,
    Exhausted,
}

pub(crate) struct RawList {
    head: AtomicUsize,
    config: ListConfig,
    shared: bool,
}

// Nodes are only reached through epoch-protected traversals.
unsafe impl Send for RawList {}
unsafe impl Sync for RawList {}

impl RawList {
    pub(crate) fn new(config: ListConfig, shared: bool) -> Self {
        RawList { head: AtomicUsize::new(0), config, shared }
    }

    pub(crate) fn config(&self) -> &ListConfig {
        &self.config
    }

    /// Acquire `range`, giving up after `budget` failures.
    pub(crate) fn acquire(&self, range: &Range, budget: &mut Budget) -> Result<NodePtr, Exhausted> {
        let range = if self.shared { *range } else { range.with_mode(crate::Mode::Writer) };
        loop {
            let node = reclaim::allocate();
            unsafe { node.as_ref() }.init(&range);
            let word = node.as_ptr() as usize;
            if self.config.fast_path
                && self.head.load(Ordering::Relaxed) == 0
                && self
                    .head
                    .compare_exchange(0, mark(word), Ordering::AcqRel, Ordering::Relaxed)
                    .is_ok()
            {
                stats::bump(Counter::FastPathAcquire);
                return Ok(node);
            }
            stats::bump(Counter::SlowPathAcquire);
            let outcome = {
                let _pin = reclaim::pin();
                self.insert(node, budget)
            };
            match outcome {
                Insert::Acquired => return Ok(node),
                Insert::ValidationFailed => {
                    // The node stays in the list, marked; a traversal recycles it.
                    stats::bump(Counter::ValidationFailure);
                    if budget.fail() {
                        return Err(Exhausted);
                    }
                }
                Insert::Exhausted => {
                    reclaim::give_back(node);
                    return Err(Exhausted);
                }
            }
        }
    }

    pub(crate) fn release(&self, node: NodePtr) {
        let word = node.as_ptr() as usize;
        if self.config.fast_path
            && self.head.load(Ordering::Acquire) == mark(word)
            && self
                .head
                .compare_exchange(mark(word), 0, Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
        {
            stats::bump(Counter::FastPathRelease);
            reclaim::retire(node);
            return;
        }
        stats::bump(Counter::ReleaseRmw);
        let prev = unsafe { node.as_ref() }.next.fetch_add(1, Ordering::SeqCst);
        assert!(!is_marked(prev), "range released twice");
    }

    fn compare(&self, cur: &Node, node: &Node) -> Placement {
        let (cs, ce) = cur.bounds();
        let (ns, ne) = node.bounds();
        if self.shared {
            compare_bounds_rw(Some((cs, ce, cur.is_reader())), ns, ne, node.is_reader())
        } else {
            compare_bounds_exclusive(Some((cs, ce)), ns, ne)
        }
    }

    #[inline]
    fn wait_for_mark(&self, cur: &Node) {
        stats::bump(Counter::WaitEntered);
        wait_until(self.config.wait, || is_marked(cur.next.load(Ordering::Acquire)));
    }

    /// Try to unlink the marked node `cur` from `prev`. Returns the successor.
    #[inline]
    fn unlink(&self, prev: &AtomicUsize, cur: usize, cur_next: usize) -> usize {
        let next = unmark(cur_next);
        if prev
            .compare_exchange(cur, next, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
        {
            stats::bump(Counter::Unlink);
            reclaim::retire(unsafe { NodePtr::new_unchecked(cur as *mut Node) });
        }
        next
    }

    /// Link `node` into its sorted position. Must run pinned.
    fn insert(&self, node: NodePtr, budget: &mut Budget) -> Insert {
        let me = node.as_ptr() as usize;
        let n = unsafe { node.as_ref() };
        'restart: loop {
            let mut prev: &AtomicUsize = &self.head;
            let mut cur = prev.load(Ordering::Acquire);
            loop {
                if is_marked(cur) {
                    if ptr::eq(prev, &self.head) {
                        // A fast-path holder owns the list; clear the tag so
                        // it releases through the regular protocol.
                        let _ = self.head.compare_exchange(
                            cur,
                            unmark(cur),
                            Ordering::AcqRel,
                            Ordering::Relaxed,
                        );
                        cur = self.head.load(Ordering::Acquire);
                        continue;
                    }
                    // The node owning `prev` was deleted under us.
                    stats::bump(Counter::Restart);
                    if budget.fail() {
                        return Insert::Exhausted;
                    }
                    continue 'restart;
                }
                let placement = if cur == 0 {
                    Placement::After
                } else {
                    let c = unsafe { node_ref(cur) };
                    stats::bump(Counter::TraversalStep);
                    let c_next = c.next.load(Ordering::Acquire);
                    if is_marked(c_next) {
                        cur = self.unlink(prev, cur, c_next);
                        continue;
                    }
                    match self.compare(c, n) {
                        Placement::Before => {
                            prev = &c.next;
                            cur = prev.load(Ordering::Acquire);
                            continue;
                        }
                        Placement::Overlap => {
                            self.wait_for_mark(c);
                            if budget.fail() {
                                return Insert::Exhausted;
                            }
                            continue;
                        }
                        Placement::After => Placement::After,
                    }
                };
                debug_assert_eq!(placement, Placement::After);
                n.next.store(cur, Ordering::Relaxed);
                match prev.compare_exchange(cur, me, Ordering::SeqCst, Ordering::Acquire) {
                    Ok(_) => {
                        if !self.shared {
                            return Insert::Acquired;
                        }
                        fence(Ordering::SeqCst);
                        let valid = if n.is_reader() {
                            self.validate_reader(n)
                        } else {
                            self.validate_writer(node)
                        };
                        return if valid { Insert::Acquired } else { Insert::ValidationFailed };
                    }
                    Err(actual) => cur = actual,
                }
            }
        }
    }

    /// Scan forward from a freshly inserted reader for conflicting writers.
    fn validate_reader(&self, n: &Node) -> bool {
        let my_end = n.end();
        let mut prev: &AtomicUsize = &n.next;
        let mut cur = unmark(prev.load(Ordering::Acquire));
        loop {
            if cur == 0 {
                return true;
            }
            let c = unsafe { node_ref(cur) };
            let (cs, _) = c.bounds();
            if cs > my_end {
                return true;
            }
            let c_next = c.next.load(Ordering::Acquire);
            if is_marked(c_next) {
                cur = self.unlink(prev, cur, c_next);
                continue;
            }
            // Readers pass each other; so do writers that merely touch our end.
            if c.is_reader() || cs >= my_end {
                prev = &c.next;
                cur = unmark(prev.load(Ordering::Acquire));
                continue;
            }
            match self.config.preference {
                Preference::Reader => self.wait_for_mark(c),
                Preference::Writer => {
                    n.next.fetch_add(1, Ordering::SeqCst);
                    return false;
                }
            }
        }
    }

    /// Re-scan from the head up to a freshly inserted writer for readers that
    /// slipped in ahead of it.
    fn validate_writer(&self, node: NodePtr) -> bool {
        let me = node.as_ptr() as usize;
        let n = unsafe { node.as_ref() };
        let my_start = n.start();
        'scan: loop {
            let mut prev: &AtomicUsize = &self.head;
            let mut cur = unmark(prev.load(Ordering::Acquire));
            loop {
                if cur == me {
                    return true;
                }
                if cur == 0 {
                    debug_assert!(false, "writer not reachable from head");
                    continue 'scan;
                }
                let c = unsafe { node_ref(cur) };
                let c_next = c.next.load(Ordering::Acquire);
                if is_marked(c_next) {
                    cur = self.unlink(prev, cur, c_next);
                    continue;
                }
                if c.end() <= my_start {
                    prev = &c.next;
                    cur = unmark(prev.load(Ordering::Acquire));
                    continue;
                }
                match self.config.preference {
                    Preference::Writer if c.is_reader() => self.wait_for_mark(c),
                    _ => {
                        n.next.fetch_add(1, Ordering::SeqCst);
                        return false;
                    }
                }
            }
        }
    }

    pub(crate) fn snapshot(&self) -> Vec<SnapshotEntry> {
        let _pin = reclaim::pin();
        let mut out = Vec::new();
        let mut cur = unmark(self.head.load(Ordering::Acquire));
        while cur != 0 {
            let c = unsafe { node_ref(cur) };
            let next = c.next.load(Ordering::Acquire);
            out.push(SnapshotEntry { range: c.range(), marked: is_marked(next) });
            cur = unmark(next);
        }
        out
    }

    pub(crate) fn node_range(node: NodePtr) -> Range {
        unsafe { node.as_ref() }.range()
    }
}

impl Drop for RawList {
    fn drop(&mut self) {
        // No guards can be alive; every linked node belongs to the list.
        let mut cur = unmark(*self.head.get_mut());
        while cur != 0 {
            let node = cur as *mut Node;
            cur = unmark(unsafe { (*node).next.load(Ordering::Relaxed) });
            unsafe { Node::free(NodePtr::new_unchecked(node)) };
        }
    }
}

/// Check the sortedness invariants of a quiescent snapshot: unmarked entries
/// are ordered by start, and an exclusive entry ends before the next starts.
pub fn check_quiescent_order(entries: &[SnapshotEntry]) -> Result<(), String> {
    let live: Vec<_> = entries.iter().filter(|e| !e.marked).map(|e| e.range).collect();
    for w in live.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.start() > b.start() {
            return Err(format!("{a:?} precedes {b:?} but starts later"));
        }
        if !a.mode().is_reader() && a.end() > b.start() {
            return Err(format!("writer {a:?} overlaps successor {b:?}"));
        }
    }
    Ok(())
}
