//! Half-open address ranges and the ordering relations used by the list locks.

use std::fmt;

use thiserror::Error;

/// Access mode of a range acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Reader,
    Writer,
}

impl Mode {
    pub fn is_reader(self) -> bool {
        matches!(self, Mode::Reader)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RangeError {
    #[error("empty or inverted range [{start:#x}, {end:#x})")]
    Empty { start: u64, end: u64 },
    #[error("range [{start:#x}, {end:#x}) exceeds lock span {span:#x}")]
    OutOfSpan { start: u64, end: u64, span: u64 },
}

/// A half-open interval `[start, end)` of 64-bit addresses together with the
/// mode it is requested in. `start < end` always holds.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Range {
    start: u64,
    end: u64,
    mode: Mode,
}

impl Range {
    /// `[0, 2^64 - 1)`, the widest representable range.
    pub const FULL: Range = Range { start: 0, end: u64::MAX, mode: Mode::Writer };

    pub fn new(start: u64, end: u64, mode: Mode) -> Result<Self, RangeError> {
        if start >= end {
            return Err(RangeError::Empty { start, end });
        }
        Ok(Range { start, end, mode })
    }

    pub fn write(start: u64, end: u64) -> Result<Self, RangeError> {
        Self::new(start, end, Mode::Writer)
    }

    pub fn read(start: u64, end: u64) -> Result<Self, RangeError> {
        Self::new(start, end, Mode::Reader)
    }

    pub fn full(mode: Mode) -> Self {
        Range { mode, ..Self::FULL }
    }

    #[inline]
    pub fn start(&self) -> u64 {
        self.start
    }

    #[inline]
    pub fn end(&self) -> u64 {
        self.end
    }

    #[inline]
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Range { mode, ..self }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    /// Ranges are never empty; provided for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn overlaps(&self, other: &Range) -> bool {
        overlaps(self, other)
    }

    /// True when the two acquisitions cannot be held at the same time.
    #[inline]
    pub fn conflicts(&self, other: &Range) -> bool {
        self.overlaps(other) && !(self.mode.is_reader() && other.mode.is_reader())
    }
}

impl fmt::Debug for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.mode {
            Mode::Reader => "R",
            Mode::Writer => "W",
        };
        write!(f, "{m}[{:#x}, {:#x})", self.start, self.end)
    }
}

/// Result of comparing a list entry against a range being inserted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(i8)]
pub enum Placement {
    /// The entry lies before the probe; keep walking.
    Before = -1,
    /// The two conflict; the probe must wait for the entry to go away.
    Overlap = 0,
    /// The entry lies after the probe (or the list ended); insert here.
    After = 1,
}

impl Placement {
    pub fn as_i8(self) -> i8 {
        self as i8
    }
}

#[inline]
pub fn overlaps(a: &Range, b: &Range) -> bool {
    a.start < b.end && b.start < a.end
}

/// Exclusive-lock comparator. `entry` is the list node (or `None` at the end
/// of the list), `probe` the range being acquired.
#[inline]
pub fn compare_exclusive(entry: Option<&Range>, probe: &Range) -> Placement {
    compare_bounds_exclusive(entry.map(|r| (r.start, r.end)), probe.start, probe.end)
}

#[inline]
pub(crate) fn compare_bounds_exclusive(
    entry: Option<(u64, u64)>,
    start: u64,
    end: u64,
) -> Placement {
    let Some((es, ee)) = entry else {
        return Placement::After;
    };
    if es >= end {
        Placement::After
    } else if start >= ee {
        Placement::Before
    } else {
        Placement::Overlap
    }
}

/// Reader-writer comparator. Two readers never overlap; among readers ties
/// are broken by start address, tested in the same branch order as the
/// exclusive comparator's "before" check first.
#[inline]
pub fn compare_rw(entry: Option<&Range>, probe: &Range) -> Placement {
    compare_bounds_rw(
        entry.map(|r| (r.start, r.end, r.mode.is_reader())),
        probe.start,
        probe.end,
        probe.mode.is_reader(),
    )
}

#[inline]
pub(crate) fn compare_bounds_rw(
    entry: Option<(u64, u64, bool)>,
    start: u64,
    end: u64,
    reader: bool,
) -> Placement {
    let Some((es, ee, entry_reader)) = entry else {
        return Placement::After;
    };
    let both_readers = entry_reader && reader;
    if start >= ee {
        return Placement::Before;
    }
    if start >= es && both_readers {
        return Placement::Before;
    }
    if es >= end {
        return Placement::After;
    }
    if es >= start && both_readers {
        return Placement::After;
    }
    Placement::Overlap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: u64, e: u64) -> Range {
        Range::read(s, e).unwrap()
    }

    fn w(s: u64, e: u64) -> Range {
        Range::write(s, e).unwrap()
    }

    #[test]
    fn construction_rejects_empty_and_inverted() {
        assert_eq!(Range::write(3, 3), Err(RangeError::Empty { start: 3, end: 3 }));
        assert!(Range::write(4, 3).is_err());
        let full = Range::write(0, u64::MAX).unwrap();
        assert_eq!(full, Range::FULL);
    }

    #[test]
    fn exclusive_examples() {
        assert_eq!(compare_exclusive(Some(&w(2, 7)), &w(1, 3)), Placement::Overlap);
        assert_eq!(compare_exclusive(None, &w(10, 20)), Placement::After);
        assert_eq!(compare_exclusive(Some(&w(4, 5)), &w(1, 3)), Placement::After);
        assert_eq!(compare_exclusive(Some(&w(1, 3)), &w(4, 5)), Placement::Before);
        // Touching half-open ranges do not overlap.
        assert_eq!(compare_exclusive(Some(&w(1, 3)), &w(3, 5)), Placement::Before);
    }

    #[test]
    fn rw_examples() {
        assert_eq!(compare_rw(Some(&r(20, 25)), &r(15, 45)), Placement::After);
        assert_eq!(compare_rw(Some(&w(30, 35)), &r(15, 45)), Placement::Overlap);
        assert_eq!(compare_rw(Some(&r(1, 10)), &r(1, 10)), Placement::Before);
        assert_eq!(compare_rw(None, &w(1, 2)), Placement::After);
        assert_eq!(compare_rw(Some(&r(1, 10)), &w(5, 6)), Placement::Overlap);
    }

    #[test]
    fn overlap_examples() {
        assert!(!overlaps(&w(1, 3), &w(4, 5)));
        assert!(overlaps(&Range::FULL, &w(7, 8)));
        assert!(overlaps(&w(5, 6), &w(5, 6)));
    }

    fn all_small_ranges() -> Vec<(u64, u64)> {
        let mut v = Vec::new();
        for s in 0..8 {
            for e in s + 1..=8 {
                v.push((s, e));
            }
        }
        v
    }

    #[test]
    fn exhaustive_exclusive_properties() {
        let ranges = all_small_ranges();
        for &(as_, ae) in &ranges {
            for &(bs, be) in &ranges {
                let a = w(as_, ae);
                let b = w(bs, be);
                let ab = compare_exclusive(Some(&a), &b);
                let ba = compare_exclusive(Some(&b), &a);
                assert_eq!(ab == Placement::Overlap, overlaps(&a, &b));
                assert_eq!(ab.as_i8(), -ba.as_i8(), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn exhaustive_rw_overlap_requires_writer() {
        let ranges = all_small_ranges();
        let modes = [Mode::Reader, Mode::Writer];
        for &(as_, ae) in &ranges {
            for &(bs, be) in &ranges {
                for ma in modes {
                    for mb in modes {
                        let a = Range::new(as_, ae, ma).unwrap();
                        let b = Range::new(bs, be, mb).unwrap();
                        let c = compare_rw(Some(&a), &b);
                        if c == Placement::Overlap {
                            assert!(overlaps(&a, &b));
                            assert!(ma == Mode::Writer || mb == Mode::Writer);
                        }
                        if ma == Mode::Writer || mb == Mode::Writer {
                            assert_eq!(c, compare_exclusive(Some(&a), &b));
                        }
                    }
                }
            }
        }
    }
}
