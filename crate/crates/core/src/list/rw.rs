use std::marker::PhantomData;

use super::node::NodePtr;
use super::{Budget, Exhausted, ListConfig, RawList, SnapshotEntry};
use crate::range::{Mode, Range, RangeError};

/// Reader-writer list-based range lock.
///
/// Overlapping readers share; a writer excludes every overlapping holder.
/// After linking its node a reader scans forward for conflicting writers and
/// a writer re-scans from the head for readers it may have missed; the
/// configured [`super::Preference`] decides which side backs off.
pub struct RwRangeLock {
    list: RawList,
}

impl Default for RwRangeLock {
    fn default() -> Self {
        Self::new()
    }
}

impl RwRangeLock {
    pub fn new() -> Self {
        Self::with_config(ListConfig::default())
    }

    pub fn with_config(config: ListConfig) -> Self {
        RwRangeLock { list: RawList::new(config, true) }
    }

    pub fn config(&self) -> &ListConfig {
        self.list.config()
    }

    pub fn acquire(&self, start: u64, end: u64, mode: Mode) -> Result<RwRangeGuard<'_>, RangeError> {
        Ok(self.lock(&Range::new(start, end, mode)?))
    }

    pub fn read(&self, start: u64, end: u64) -> Result<RwRangeGuard<'_>, RangeError> {
        self.acquire(start, end, Mode::Reader)
    }

    pub fn write(&self, start: u64, end: u64) -> Result<RwRangeGuard<'_>, RangeError> {
        self.acquire(start, end, Mode::Writer)
    }

    pub fn lock(&self, range: &Range) -> RwRangeGuard<'_> {
        let node = self
            .list
            .acquire(range, &mut Budget::unlimited())
            .expect("unlimited budget");
        RwRangeGuard::new(&self.list, node)
    }

    pub(crate) fn lock_bounded(
        &self,
        range: &Range,
        budget: &mut Budget,
    ) -> Result<RwRangeGuard<'_>, Exhausted> {
        let node = self.list.acquire(range, budget)?;
        Ok(RwRangeGuard::new(&self.list, node))
    }

    pub fn quiescent_snapshot(&self) -> Vec<SnapshotEntry> {
        self.list.snapshot()
    }
}

/// A held shared or exclusive range. Released on drop by the acquiring thread.
#[must_use = "the range is released as soon as the guard is dropped"]
pub struct RwRangeGuard<'a> {
    list: &'a RawList,
    node: NodePtr,
    _not_send: PhantomData<*const ()>,
}

impl<'a> RwRangeGuard<'a> {
    fn new(list: &'a RawList, node: NodePtr) -> Self {
        RwRangeGuard { list, node, _not_send: PhantomData }
    }

    pub fn range(&self) -> Range {
        RawList::node_range(self.node)
    }

    pub fn release(self) {
        drop(self)
    }
}

impl Drop for RwRangeGuard<'_> {
    fn drop(&mut self) {
        self.list.release(self.node);
    }
}

impl std::fmt::Debug for RwRangeGuard<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("RwRangeGuard").field(&self.range()).finish()
    }
}

impl std::fmt::Debug for RwRangeLock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RwRangeLock").field("config", self.config()).finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::list::{check_quiescent_order, Preference};
    use crate::stats::{self, Counter};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::thread;
    use std::time::Duration;

    fn slow() -> RwRangeLock {
        RwRangeLock::with_config(ListConfig::default().fast_path(false))
    }

    #[test]
    fn three_readers_hold_together() {
        let lock = slow();
        let a = lock.read(1, 10).unwrap();
        let b = lock.read(20, 25).unwrap();
        let c = lock.read(40, 50).unwrap();
        let snap = lock.quiescent_snapshot();
        assert_eq!(snap.len(), 3);
        check_quiescent_order(&snap).unwrap();
        drop((a, b, c));
    }

    #[test]
    fn overlapping_readers_never_wait() {
        let lock = slow();
        let before = stats::snapshot();
        let a = lock.read(0, 100).unwrap();
        let b = lock.read(0, 100).unwrap();
        let c = lock.read(15, 45).unwrap();
        if stats::ENABLED {
            assert_eq!(stats::snapshot().since(&before).get(Counter::WaitEntered), 0);
        }
        let snap = lock.quiescent_snapshot();
        assert_eq!(
            snap.iter().map(|e| (e.range.start(), e.range.end())).collect::<Vec<_>>(),
            vec![(0, 100), (0, 100), (15, 45)]
        );
        drop((a, b, c));
    }

    #[test]
    fn single_writer_takes_fast_path() {
        let lock = RwRangeLock::new();
        let before = stats::snapshot();
        let g = lock.write(3, 4).unwrap();
        if stats::ENABLED {
            assert_eq!(stats::snapshot().since(&before).get(Counter::FastPathAcquire), 1);
        }
        drop(g);
        assert!(lock.quiescent_snapshot().is_empty());
    }

    #[test]
    fn reader_waits_for_writer() {
        let lock = slow();
        let w = lock.write(10, 20).unwrap();
        let got = AtomicBool::new(false);
        thread::scope(|s| {
            s.spawn(|| {
                let _r = lock.read(0, 15).unwrap();
                got.store(true, Ordering::SeqCst);
            });
            thread::sleep(Duration::from_millis(30));
            assert!(!got.load(Ordering::SeqCst));
            drop(w);
        });
        assert!(got.load(Ordering::SeqCst));
    }

    #[test]
    fn writer_waits_for_reader() {
        let lock = slow();
        let r = lock.read(10, 20).unwrap();
        let got = AtomicBool::new(false);
        thread::scope(|s| {
            s.spawn(|| {
                let _w = lock.write(15, 16).unwrap();
                got.store(true, Ordering::SeqCst);
            });
            thread::sleep(Duration::from_millis(30));
            assert!(!got.load(Ordering::SeqCst));
            drop(r);
        });
        assert!(got.load(Ordering::SeqCst));
    }

    #[test]
    fn touching_writer_does_not_block_reader() {
        let lock = slow();
        let _w = lock.write(10, 20).unwrap();
        let before = stats::snapshot();
        let _r = lock.read(0, 10).unwrap();
        if stats::ENABLED {
            assert_eq!(stats::snapshot().since(&before).get(Counter::WaitEntered), 0);
        }
    }

    // Replays the reader/writer race by hand: a writer [30,35) linked after
    // [20,25) and a reader [15,45) linked after [1,10), neither validated yet.
    #[test]
    fn validation_resolves_reader_writer_race() {
        use crate::list::node::Node;
        use std::sync::atomic::Ordering::SeqCst;

        fn link_after(pred: &Node, range: Range) -> NodePtr {
            let n = crate::reclaim::allocate();
            let r = unsafe { n.as_ref() };
            r.init(&range);
            r.next.store(pred.next.load(SeqCst), SeqCst);
            pred.next.store(n.as_ptr() as usize, SeqCst);
            n
        }

        let lock = slow();
        let a = lock.read(1, 10).unwrap();
        let b = lock.read(20, 25).unwrap();
        let c = lock.read(40, 50).unwrap();
        let w = link_after(unsafe { b.node.as_ref() }, Range::write(30, 35).unwrap());
        let r = link_after(unsafe { a.node.as_ref() }, Range::read(15, 45).unwrap());

        let before = stats::snapshot();
        {
            let _pin = crate::reclaim::pin();
            assert!(!lock.list.validate_writer(w), "writer must back off");
        }
        let snap = lock.quiescent_snapshot();
        let w_entry = snap.iter().find(|e| e.range == Range::write(30, 35).unwrap()).unwrap();
        assert!(w_entry.marked);
        check_quiescent_order(&snap).unwrap();
        {
            let _pin = crate::reclaim::pin();
            assert!(lock.list.validate_reader(unsafe { r.as_ref() }));
        }
        if stats::ENABLED {
            let d = stats::snapshot().since(&before);
            assert_eq!(d.get(Counter::WaitEntered), 0);
            assert_eq!(d.get(Counter::Unlink), 1, "reader unlinks the retreated writer");
        }
        lock.list.release(r);
        drop((a, b, c));
    }

    #[test]
    fn writer_first_in_list_validates_trivially() {
        let lock = slow();
        let w = lock.write(0, 5).unwrap();
        let _r = lock.read(10, 20).unwrap();
        let _pin = crate::reclaim::pin();
        assert!(lock.list.validate_writer(w.node));
    }

    #[test]
    fn writer_preference_policy_excludes() {
        let lock = RwRangeLock::with_config(ListConfig::default().preference(Preference::Writer));
        let inside = std::sync::atomic::AtomicIsize::new(0);
        thread::scope(|s| {
            for t in 0..4 {
                let lock = &lock;
                let inside = &inside;
                s.spawn(move || {
                    for i in 0..2000u64 {
                        if (i + t) % 4 == 0 {
                            let _g = lock.write(0, 64).unwrap();
                            assert_eq!(inside.swap(-1, Ordering::SeqCst), 0);
                            inside.store(0, Ordering::SeqCst);
                        } else {
                            let _g = lock.read(i % 32, 32 + i % 32).unwrap();
                            let v = inside.fetch_add(1, Ordering::SeqCst);
                            assert!(v >= 0, "reader overlapped a writer");
                            inside.fetch_sub(1, Ordering::SeqCst);
                        }
                    }
                });
            }
        });
        check_quiescent_order(&lock.quiescent_snapshot()).unwrap();
    }
}
