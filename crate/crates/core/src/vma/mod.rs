//! User-space model of a process address space whose VMA index is guarded
//! by a reader-writer range lock.
//!
//! Structural changes to the index (inserting, removing or merging VMAs)
//! happen only under a write lock of the full range, and releasing that lock
//! bumps a sequence number. `mprotect` first tries a speculative path that
//! write-locks just the target VMA plus one page on each side and edits
//! boundaries or flags in place; if the change turns out to be structural
//! it retries under the full range. Page faults read-lock a single page.

pub mod oracle;

use std::cell::UnsafeCell;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;

use crate::list::{ListConfig, RwRangeGuard, RwRangeLock};
use crate::range::{Mode, Range};

pub const PAGE_SIZE: u64 = 4096;

pub fn page_floor(addr: u64) -> u64 {
    addr & !(PAGE_SIZE - 1)
}

fn aligned(x: u64) -> bool {
    x.is_multiple_of(PAGE_SIZE)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Prot(u8);

impl Prot {
    pub const NONE: Prot = Prot(0);
    pub const READ: Prot = Prot(1);
    pub const WRITE: Prot = Prot(2);
    pub const EXEC: Prot = Prot(4);
    pub const RW: Prot = Prot(3);

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn from_bits(bits: u8) -> Prot {
        Prot(bits & 7)
    }

    pub const fn contains(self, other: Prot) -> bool {
        self.0 & other.0 == other.0
    }
}

impl std::ops::BitOr for Prot {
    type Output = Prot;
    fn bitor(self, rhs: Prot) -> Prot {
        Prot(self.0 | rhs.0)
    }
}

impl fmt::Debug for Prot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |p: Prot, c| if self.contains(p) { c } else { '-' };
        write!(f, "{}{}{}", flag(Prot::READ, 'r'), flag(Prot::WRITE, 'w'), flag(Prot::EXEC, 'x'))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
    Exec,
}

impl Access {
    fn needs(self) -> Prot {
        match self {
            Access::Read => Prot::READ,
            Access::Write => Prot::WRITE,
            Access::Exec => Prot::EXEC,
        }
    }
}

/// A snapshot of one VMA.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Vma {
    pub start: u64,
    pub end: u64,
    pub prot: Prot,
}

impl fmt::Debug for Vma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#x}, {:#x}) {:?}", self.start, self.end, self.prot)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VmaError {
    #[error("address or length {0:#x} is not page aligned")]
    Unaligned(u64),
    #[error("zero-length request")]
    ZeroSize,
    #[error("[{start:#x}, {end:#x}) is not fully mapped")]
    NotMapped { start: u64, end: u64 },
    #[error("[{start:#x}, {end:#x}) overlaps an existing mapping")]
    Overlap { start: u64, end: u64 },
    #[error("no free range of {size:#x} bytes")]
    NoSpace { size: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MprotectOutcome {
    SpeculativeSuccess,
    FullPathSuccess,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MprotectReport {
    pub outcome: MprotectOutcome,
    /// Speculative validations that failed and restarted the operation.
    pub retries: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultOutcome {
    Ok,
    SegfaultSim,
}

/// Index node. Bounds and flags are single-word atomics so that in-place
/// edits under a partial write lock can race with readers elsewhere.
struct VmaNode {
    start: AtomicU64,
    end: AtomicU64,
    prot: AtomicU8,
}

impl VmaNode {
    fn new(v: Vma) -> Arc<VmaNode> {
        Arc::new(VmaNode {
            start: AtomicU64::new(v.start),
            end: AtomicU64::new(v.end),
            prot: AtomicU8::new(v.prot.bits()),
        })
    }

    fn start(&self) -> u64 {
        self.start.load(Ordering::Acquire)
    }

    fn end(&self) -> u64 {
        self.end.load(Ordering::Acquire)
    }

    fn prot(&self) -> Prot {
        Prot::from_bits(self.prot.load(Ordering::Acquire))
    }

    fn snapshot(&self) -> Vma {
        Vma { start: self.start(), end: self.end(), prot: self.prot() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VmaConfig {
    /// Lowest address `mmap` hands out.
    pub mmap_base: u64,
    /// Failed speculative validations tolerated before falling back to the
    /// full range; `None` retries forever.
    pub max_retries: Option<u32>,
    pub lock: ListConfig,
}

impl Default for VmaConfig {
    fn default() -> Self {
        VmaConfig { mmap_base: 0x1000_0000, max_retries: None, lock: ListConfig::default() }
    }
}

pub struct AddressSpace {
    index: UnsafeCell<Vec<Arc<VmaNode>>>,
    seq: AtomicU64,
    lock: RwRangeLock,
    /// Set only while the full range is write-locked.
    structural: AtomicBool,
    config: VmaConfig,
}

// The index is only mutated under the full-range write lock.
unsafe impl Sync for AddressSpace {}
unsafe impl Send for AddressSpace {}

/// Full-range write acquisition; bumps `seq` just before the lock is released.
struct FullWrite<'a> {
    space: &'a AddressSpace,
    _guard: RwRangeGuard<'a>,
}

impl Drop for FullWrite<'_> {
    fn drop(&mut self) {
        self.space.structural.store(false, Ordering::Relaxed);
        self.space.seq.fetch_add(1, Ordering::SeqCst);
    }
}

impl FullWrite<'_> {
    fn index(&mut self) -> &mut Vec<Arc<VmaNode>> {
        assert!(self.space.structural.load(Ordering::Relaxed));
        unsafe { &mut *self.space.index.get() }
    }
}

enum Speculation {
    Done,
    Structural,
    Unmapped,
}

impl Default for AddressSpace {
    fn default() -> Self {
        Self::new(VmaConfig::default())
    }
}

impl AddressSpace {
    pub fn new(config: VmaConfig) -> Self {
        AddressSpace {
            index: UnsafeCell::new(Vec::new()),
            seq: AtomicU64::new(0),
            lock: RwRangeLock::with_config(config.lock),
            structural: AtomicBool::new(false),
            config,
        }
    }

    /// Build a space from a layout, which must be sorted, disjoint and
    /// page aligned.
    pub fn with_layout(config: VmaConfig, layout: &[Vma]) -> Self {
        let space = Self::new(config);
        check_layout(layout).expect("invalid initial layout");
        {
            let mut w = space.full_write();
            *w.index() = layout.iter().map(|&v| VmaNode::new(v)).collect();
        }
        space
    }

    pub fn seq(&self) -> u64 {
        self.seq.load(Ordering::SeqCst)
    }

    pub fn lock(&self) -> &RwRangeLock {
        &self.lock
    }

    fn full_write(&self) -> FullWrite<'_> {
        let guard = self.lock.lock(&Range::FULL);
        self.structural.store(true, Ordering::Relaxed);
        FullWrite { space: self, _guard: guard }
    }

    /// Caller must hold the range lock in some mode.
    fn index(&self) -> &[Arc<VmaNode>] {
        unsafe { &*self.index.get() }
    }

    /// Position of the first VMA whose end is above `addr`.
    fn find_vma_pos(&self, addr: u64) -> Option<usize> {
        let idx = self.index();
        let pos = idx.partition_point(|v| v.end() <= addr);
        (pos < idx.len()).then_some(pos)
    }

    /// The first VMA ending above `addr`, which need not contain it.
    pub fn find_vma(&self, addr: u64) -> Option<Vma> {
        let _g = self.lock.lock(&page_range(addr, Mode::Reader));
        self.find_vma_pos(addr).map(|p| self.index()[p].snapshot())
    }

    pub fn layout(&self) -> Vec<Vma> {
        let _g = self.lock.lock(&Range::FULL.with_mode(Mode::Reader));
        self.index().iter().map(|v| v.snapshot()).collect()
    }

    pub fn page_fault(&self, addr: u64, access: Access) -> FaultOutcome {
        let _g = self.lock.lock(&page_range(addr, Mode::Reader));
        match self.find_vma_pos(addr).map(|p| &self.index()[p]) {
            Some(v) if v.start() <= addr && v.prot().contains(access.needs()) => FaultOutcome::Ok,
            _ => FaultOutcome::SegfaultSim,
        }
    }

    /// Change protection of `[addr, addr + size)`. An unaligned `addr` is
    /// rounded down to its page; `size` must be a whole number of pages.
    pub fn mprotect(&self, addr: u64, size: u64, prot: Prot) -> Result<MprotectReport, VmaError> {
        if size == 0 {
            return Err(VmaError::ZeroSize);
        }
        if !aligned(size) {
            return Err(VmaError::Unaligned(size));
        }
        let start = page_floor(addr);
        let end = start.checked_add(size).ok_or(VmaError::NotMapped { start, end: u64::MAX })?;
        let mut retries = 0;
        loop {
            if self.config.max_retries.is_some_and(|m| retries >= m) {
                break;
            }
            let (node, seq, lo, hi) = {
                let _r = self.lock.lock(&Range::read(start, end).expect("non-empty"));
                let Some(pos) = self.find_vma_pos(start) else {
                    return Err(VmaError::NotMapped { start, end });
                };
                let node = self.index()[pos].clone();
                let seq = self.seq();
                let (lo, hi) = widen(&node);
                (node, seq, lo, hi)
            };
            let _w = self.lock.lock(&Range::write(lo, hi).expect("non-empty"));
            if seq != self.seq() || (lo, hi) != widen(&node) {
                retries += 1;
                continue;
            }
            let pos = self.find_vma_pos(start).expect("index unchanged since validation");
            debug_assert!(Arc::ptr_eq(&self.index()[pos], &node));
            match self.speculate(pos, start, end, prot) {
                Speculation::Done => {
                    return Ok(MprotectReport { outcome: MprotectOutcome::SpeculativeSuccess, retries })
                }
                Speculation::Unmapped => return Err(VmaError::NotMapped { start, end }),
                Speculation::Structural => break,
            }
        }
        let mut w = self.full_write();
        mprotect_full(w.index(), start, end, prot)?;
        Ok(MprotectReport { outcome: MprotectOutcome::FullPathSuccess, retries })
    }

    /// Apply a change confined to the VMA at `pos` and the page next to it on
    /// either side. The caller holds the widened write range.
    fn speculate(&self, pos: usize, start: u64, end: u64, prot: Prot) -> Speculation {
        let idx = self.index();
        let v = &idx[pos];
        let (vs, ve, vp) = (v.start(), v.end(), v.prot());
        if start < vs {
            return Speculation::Unmapped;
        }
        if end > ve {
            return Speculation::Structural;
        }
        if vp == prot {
            return Speculation::Done;
        }
        let prev = pos.checked_sub(1).map(|p| &idx[p]).filter(|p| p.end() == vs);
        let next = idx.get(pos + 1).filter(|n| n.start() == ve);
        let joins = |n: Option<&Arc<VmaNode>>| n.is_some_and(|n| n.prot() == prot);
        match (start == vs, end == ve) {
            (true, true) if !joins(prev) && !joins(next) => {
                v.prot.store(prot.bits(), Ordering::Release);
                Speculation::Done
            }
            (true, false) if joins(prev) => {
                prev.unwrap().end.store(end, Ordering::Release);
                v.start.store(end, Ordering::Release);
                Speculation::Done
            }
            (false, true) if joins(next) => {
                v.end.store(start, Ordering::Release);
                next.unwrap().start.store(start, Ordering::Release);
                Speculation::Done
            }
            _ => Speculation::Structural,
        }
    }

    /// Map `size` bytes at the lowest free address at or above the base.
    pub fn mmap(&self, size: u64, prot: Prot) -> Result<u64, VmaError> {
        check_len(size)?;
        let mut w = self.full_write();
        let idx = w.index();
        let mut cursor = self.config.mmap_base;
        for v in idx.iter() {
            if v.end() <= cursor {
                continue;
            }
            if v.start() >= cursor.saturating_add(size) {
                break;
            }
            cursor = v.end();
        }
        if cursor.checked_add(size).is_none() {
            return Err(VmaError::NoSpace { size });
        }
        insert_range(idx, Vma { start: cursor, end: cursor + size, prot });
        Ok(cursor)
    }

    /// Map `[addr, addr + size)`, which must be free.
    pub fn mmap_fixed(&self, addr: u64, size: u64, prot: Prot) -> Result<(), VmaError> {
        check_len(size)?;
        if !aligned(addr) {
            return Err(VmaError::Unaligned(addr));
        }
        let end = addr.checked_add(size).ok_or(VmaError::NoSpace { size })?;
        let mut w = self.full_write();
        let idx = w.index();
        if idx.iter().any(|v| v.start() < end && v.end() > addr) {
            return Err(VmaError::Overlap { start: addr, end });
        }
        insert_range(idx, Vma { start: addr, end, prot });
        Ok(())
    }

    /// Unmap `[addr, addr + size)`, which must be fully mapped.
    pub fn munmap(&self, addr: u64, size: u64) -> Result<(), VmaError> {
        check_len(size)?;
        if !aligned(addr) {
            return Err(VmaError::Unaligned(addr));
        }
        let end = addr.checked_add(size).ok_or(VmaError::NotMapped { start: addr, end: u64::MAX })?;
        let mut w = self.full_write();
        let idx = w.index();
        let mut layout = snapshot(idx);
        if !covered(&layout, addr, end) {
            return Err(VmaError::NotMapped { start: addr, end });
        }
        layout = carve(&layout, addr, end);
        *idx = layout.into_iter().map(VmaNode::new).collect();
        Ok(())
    }

    /// Sorted, disjoint, aligned and maximally merged.
    pub fn check(&self) -> Result<(), String> {
        let layout = self.layout();
        check_layout(&layout)?;
        if let Some(w) = layout.windows(2).find(|w| w[0].end == w[1].start && w[0].prot == w[1].prot) {
            return Err(format!("unmerged neighbours {:?} {:?}", w[0], w[1]));
        }
        Ok(())
    }
}

fn page_range(addr: u64, mode: Mode) -> Range {
    let p = page_floor(addr);
    Range::new(p, p.saturating_add(PAGE_SIZE).max(p + 1), mode).expect("non-empty")
}

fn widen(node: &VmaNode) -> (u64, u64) {
    (node.start().saturating_sub(PAGE_SIZE), node.end().saturating_add(PAGE_SIZE))
}

fn check_len(size: u64) -> Result<(), VmaError> {
    if size == 0 {
        Err(VmaError::ZeroSize)
    } else if !aligned(size) {
        Err(VmaError::Unaligned(size))
    } else {
        Ok(())
    }
}

pub fn check_layout(layout: &[Vma]) -> Result<(), String> {
    for v in layout {
        if v.start >= v.end || !aligned(v.start) || !aligned(v.end) {
            return Err(format!("malformed vma {v:?}"));
        }
    }
    if let Some(w) = layout.windows(2).find(|w| w[0].end > w[1].start) {
        return Err(format!("overlapping or unsorted {:?} {:?}", w[0], w[1]));
    }
    Ok(())
}

fn snapshot(idx: &[Arc<VmaNode>]) -> Vec<Vma> {
    idx.iter().map(|v| v.snapshot()).collect()
}

fn covered(layout: &[Vma], start: u64, end: u64) -> bool {
    let mut at = start;
    for v in layout {
        if v.end <= at {
            continue;
        }
        if v.start > at {
            return false;
        }
        at = v.end;
        if at >= end {
            return true;
        }
    }
    at >= end
}

/// Remove `[start, end)` from the layout, splitting VMAs at the edges.
fn carve(layout: &[Vma], start: u64, end: u64) -> Vec<Vma> {
    let mut out = Vec::with_capacity(layout.len() + 1);
    for &v in layout {
        if v.end <= start || v.start >= end {
            out.push(v);
            continue;
        }
        if v.start < start {
            out.push(Vma { end: start, ..v });
        }
        if v.end > end {
            out.push(Vma { start: end, ..v });
        }
    }
    out
}

/// Merge contiguous neighbours with equal protection.
fn merge(layout: Vec<Vma>) -> Vec<Vma> {
    let mut out: Vec<Vma> = Vec::with_capacity(layout.len());
    for v in layout {
        match out.last_mut() {
            Some(last) if last.end == v.start && last.prot == v.prot => last.end = v.end,
            _ => out.push(v),
        }
    }
    out
}

fn insert_range(idx: &mut Vec<Arc<VmaNode>>, vma: Vma) {
    let mut layout = snapshot(idx);
    let pos = layout.partition_point(|v| v.start < vma.start);
    layout.insert(pos, vma);
    *idx = merge(layout).into_iter().map(VmaNode::new).collect();
}

fn mprotect_full(idx: &mut Vec<Arc<VmaNode>>, start: u64, end: u64, prot: Prot) -> Result<(), VmaError> {
    let layout = snapshot(idx);
    if !covered(&layout, start, end) {
        return Err(VmaError::NotMapped { start, end });
    }
    let mut out = carve(&layout, start, end);
    let pos = out.partition_point(|v| v.start < start);
    out.insert(pos, Vma { start, end, prot });
    *idx = merge(out).into_iter().map(VmaNode::new).collect();
    Ok(())
}

#[cfg(test)]
mod tests;
