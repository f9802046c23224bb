use parking_lot::lock_api::RawRwLock as _;
use parking_lot::RawRwLock;

use crate::range::{Mode, Range, RangeError};

/// Fixed array of reader-writer locks, each covering an equal slice of
/// `[0, span)`. A range locks every segment it touches, in ascending order.
pub struct SegmentRangeLock {
    segments: Box<[RawRwLock]>,
    span: u64,
    width: u64,
}

impl SegmentRangeLock {
    pub const DEFAULT_SEGMENTS: usize = 256;

    /// # Panics
    /// If `segments` or `span` is zero.
    pub fn new(segments: usize, span: u64) -> Self {
        assert!(segments > 0 && span > 0, "segment lock needs segments and a span");
        let width = span.div_ceil(segments as u64);
        SegmentRangeLock {
            segments: (0..segments).map(|_| RawRwLock::INIT).collect(),
            span,
            width,
        }
    }

    pub fn segments(&self) -> usize {
        self.segments.len()
    }

    pub fn span(&self) -> u64 {
        self.span
    }

    /// Indices of the first and last segment covering `range`.
    pub fn covering(&self, range: &Range) -> Result<(usize, usize), RangeError> {
        if range.end() > self.span {
            return Err(RangeError::OutOfSpan { start: range.start(), end: range.end(), span: self.span });
        }
        Ok(((range.start() / self.width) as usize, ((range.end() - 1) / self.width) as usize))
    }

    pub fn acquire(&self, start: u64, end: u64, mode: Mode) -> Result<SegmentGuard<'_>, RangeError> {
        self.lock(&Range::new(start, end, mode)?)
    }

    pub fn lock(&self, range: &Range) -> Result<SegmentGuard<'_>, RangeError> {
        let (first, last) = self.covering(range)?;
        let reader = range.mode().is_reader();
        let mut prev = None;
        for i in first..=last {
            debug_assert!(prev.is_none_or(|p| p < i), "segments must be taken in ascending order");
            prev = Some(i);
            if reader {
                self.segments[i].lock_shared();
            } else {
                self.segments[i].lock_exclusive();
            }
        }
        Ok(SegmentGuard { lock: self, first, last, reader, range: *range })
    }

    /// Lock every segment.
    pub fn lock_all(&self, mode: Mode) -> SegmentGuard<'_> {
        self.lock(&Range::new(0, self.span, mode).expect("span is non-empty"))
            .expect("full span is in range")
    }
}

impl Default for SegmentRangeLock {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SEGMENTS, Self::DEFAULT_SEGMENTS as u64)
    }
}

#[must_use = "the range is released as soon as the guard is dropped"]
pub struct SegmentGuard<'a> {
    lock: &'a SegmentRangeLock,
    first: usize,
    last: usize,
    reader: bool,
    range: Range,
}

impl SegmentGuard<'_> {
    pub fn range(&self) -> Range {
        self.range
    }

    pub fn segment_count(&self) -> usize {
        self.last - self.first + 1
    }
}

impl Drop for SegmentGuard<'_> {
    fn drop(&mut self) {
        for i in self.first..=self.last {
            // Safety: this guard acquired segment i in this mode.
            unsafe {
                if self.reader {
                    self.lock.segments[i].unlock_shared();
                } else {
                    self.lock.segments[i].unlock_exclusive();
                }
            }
        }
    }
}

impl std::fmt::Debug for SegmentGuard<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentGuard")
            .field("range", &self.range)
            .field("segments", &(self.first..=self.last))
            .finish()
    }
}
