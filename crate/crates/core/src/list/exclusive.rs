use std::marker::PhantomData;

use super::node::NodePtr;
use super::{Budget, Exhausted, ListConfig, RawList, SnapshotEntry};
use crate::range::{Range, RangeError};

/// Exclusive-access list-based range lock.
///
/// Non-overlapping ranges are held concurrently; an acquisition that
/// overlaps a held range waits until that range is released.
pub struct RangeLock {
    list: RawList,
}

impl Default for RangeLock {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeLock {
    pub fn new() -> Self {
        Self::with_config(ListConfig::default())
    }

    pub fn with_config(config: ListConfig) -> Self {
        RangeLock { list: RawList::new(config, false) }
    }

    pub fn config(&self) -> &ListConfig {
        self.list.config()
    }

    /// Acquire `[start, end)`, blocking while an overlapping range is held.
    pub fn acquire(&self, start: u64, end: u64) -> Result<RangeGuard<'_>, RangeError> {
        Ok(self.lock(&Range::write(start, end)?))
    }

    /// Acquire `range`; its mode is ignored.
    pub fn lock(&self, range: &Range) -> RangeGuard<'_> {
        let node = self
            .list
            .acquire(range, &mut Budget::unlimited())
            .expect("unlimited budget");
        RangeGuard::new(&self.list, node)
    }

    pub(crate) fn lock_bounded(
        &self,
        range: &Range,
        budget: &mut Budget,
    ) -> Result<RangeGuard<'_>, Exhausted> {
        let node = self.list.acquire(range, budget)?;
        Ok(RangeGuard::new(&self.list, node))
    }

    /// Walk the whole list, including marked entries. Only meaningful when no
    /// thread is acquiring or releasing concurrently.
    pub fn quiescent_snapshot(&self) -> Vec<SnapshotEntry> {
        self.list.snapshot()
    }
}

/// A held exclusive range. Released on drop.
///
/// Must be released by the thread that acquired it.
#[must_use = "the range is released as soon as the guard is dropped"]
pub struct RangeGuard<'a> {
    list: &'a RawList,
    node: NodePtr,
    _not_send: PhantomData<*const ()>,
}

impl<'a> RangeGuard<'a> {
    fn new(list: &'a RawList, node: NodePtr) -> Self {
        RangeGuard { list, node, _not_send: PhantomData }
    }

    pub fn range(&self) -> Range {
        RawList::node_range(self.node)
    }

    pub fn release(self) {
        drop(self)
    }
}

impl Drop for RangeGuard<'_> {
    fn drop(&mut self) {
        self.list.release(self.node);
    }
}

impl std::fmt::Debug for RangeGuard<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("RangeGuard").field(&self.range()).finish()
    }
}

impl std::fmt::Debug for RangeLock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RangeLock").field("config", self.config()).finish_non_exhaustive()
    }
}
