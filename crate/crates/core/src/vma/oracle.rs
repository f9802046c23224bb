//! Sequential reference model of an address space: one protection entry per
//! mapped page.

use std::collections::BTreeMap;

use super::{page_floor, Access, FaultOutcome, Prot, Vma, VmaError, PAGE_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VmaOp {
    Mmap { size: u64, prot: Prot },
    MmapFixed { addr: u64, size: u64, prot: Prot },
    Munmap { addr: u64, size: u64 },
    Mprotect { addr: u64, size: u64, prot: Prot },
    PageFault { addr: u64, access: Access },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpResult {
    Mapped(u64),
    Done,
    Fault(FaultOutcome),
    Failed(VmaError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PageMap {
    pages: BTreeMap<u64, Prot>,
    base: u64,
}

impl PageMap {
    pub fn new(base: u64) -> Self {
        PageMap { pages: BTreeMap::new(), base }
    }

    pub fn from_layout(base: u64, layout: &[Vma]) -> Self {
        let mut m = Self::new(base);
        for v in layout {
            for p in (v.start..v.end).step_by(PAGE_SIZE as usize) {
                m.pages.insert(p, v.prot);
            }
        }
        m
    }

    fn check(size: u64) -> Result<(), VmaError> {
        if size == 0 {
            return Err(VmaError::ZeroSize);
        }
        if !size.is_multiple_of(PAGE_SIZE) {
            return Err(VmaError::Unaligned(size));
        }
        Ok(())
    }

    fn all_mapped(&self, start: u64, end: u64) -> bool {
        (start..end).step_by(PAGE_SIZE as usize).all(|p| self.pages.contains_key(&p))
    }

    fn any_mapped(&self, start: u64, end: u64) -> bool {
        self.pages.range(start..end).next().is_some()
    }

    fn fill(&mut self, start: u64, end: u64, prot: Prot) {
        for p in (start..end).step_by(PAGE_SIZE as usize) {
            self.pages.insert(p, prot);
        }
    }

    pub fn apply(&mut self, op: VmaOp) -> OpResult {
        match self.try_apply(op) {
            Ok(r) => r,
            Err(e) => OpResult::Failed(e),
        }
    }

    fn try_apply(&mut self, op: VmaOp) -> Result<OpResult, VmaError> {
        match op {
            VmaOp::Mmap { size, prot } => {
                Self::check(size)?;
                let mut at = self.base;
                while self.any_mapped(at, at.checked_add(size).ok_or(VmaError::NoSpace { size })?) {
                    let last = *self.pages.range(at..at + size).next_back().unwrap().0;
                    at = last + PAGE_SIZE;
                }
                self.fill(at, at + size, prot);
                Ok(OpResult::Mapped(at))
            }
            VmaOp::MmapFixed { addr, size, prot } => {
                Self::check(size)?;
                if addr % PAGE_SIZE != 0 {
                    return Err(VmaError::Unaligned(addr));
                }
                let end = addr.checked_add(size).ok_or(VmaError::NoSpace { size })?;
                if self.any_mapped(addr, end) {
                    return Err(VmaError::Overlap { start: addr, end });
                }
                self.fill(addr, end, prot);
                Ok(OpResult::Done)
            }
            VmaOp::Munmap { addr, size } => {
                Self::check(size)?;
                if addr % PAGE_SIZE != 0 {
                    return Err(VmaError::Unaligned(addr));
                }
                let end = addr.checked_add(size).ok_or(VmaError::NotMapped { start: addr, end: u64::MAX })?;
                if !self.all_mapped(addr, end) {
                    return Err(VmaError::NotMapped { start: addr, end });
                }
                for p in (addr..end).step_by(PAGE_SIZE as usize) {
                    self.pages.remove(&p);
                }
                Ok(OpResult::Done)
            }
            VmaOp::Mprotect { addr, size, prot } => {
                Self::check(size)?;
                let start = page_floor(addr);
                let end = start.checked_add(size).ok_or(VmaError::NotMapped { start, end: u64::MAX })?;
                if !self.all_mapped(start, end) {
                    return Err(VmaError::NotMapped { start, end });
                }
                self.fill(start, end, prot);
                Ok(OpResult::Done)
            }
            VmaOp::PageFault { addr, access } => {
                let ok = self.pages.get(&page_floor(addr)).is_some_and(|p| p.contains(access.needs()));
                Ok(OpResult::Fault(if ok { FaultOutcome::Ok } else { FaultOutcome::SegfaultSim }))
            }
        }
    }

    /// Maximally merged VMA layout.
    pub fn layout(&self) -> Vec<Vma> {
        let mut out: Vec<Vma> = Vec::new();
        for (&p, &prot) in &self.pages {
            match out.last_mut() {
                Some(v) if v.end == p && v.prot == prot => v.end += PAGE_SIZE,
                _ => out.push(Vma { start: p, end: p + PAGE_SIZE, prot }),
            }
        }
        out
    }

    /// Restrict to pages in `[start, end)`.
    pub fn window(&self, start: u64, end: u64) -> Vec<Vma> {
        let mut sub = PageMap::new(self.base);
        sub.pages = self.pages.range(start..end).map(|(&k, &v)| (k, v)).collect();
        sub.layout()
    }
}
