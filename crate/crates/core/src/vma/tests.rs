use super::oracle::{OpResult, PageMap, VmaOp};
use super::*;
use proptest::prelude::*;

fn vma(start: u64, end: u64, prot: Prot) -> Vma {
    Vma { start, end, prot }
}

fn space(layout: &[Vma]) -> AddressSpace {
    AddressSpace::with_layout(VmaConfig { mmap_base: 0, ..VmaConfig::default() }, layout)
}

#[test]
fn find_vma_rules() {
    let s = space(&[]);
    assert_eq!(s.find_vma(0x1800), None);
    let s = space(&[vma(0x1000, 0x3000, Prot::READ)]);
    assert_eq!(s.find_vma(0x1800), Some(vma(0x1000, 0x3000, Prot::READ)));
    // Below every VMA the first one is returned even though it does not
    // contain the address.
    assert_eq!(s.find_vma(0x10), Some(vma(0x1000, 0x3000, Prot::READ)));
    assert_eq!(s.find_vma(0x3000), None);
}

#[test]
fn figure_boundary_shift_is_speculative() {
    let before = [vma(0, 0x1000, Prot::RW), vma(0x1000, 0x3000, Prot::READ)];
    let s = space(&before);
    let seq = s.seq();
    let r = s.mprotect(0x1800, 4096, Prot::READ | Prot::WRITE).unwrap();
    assert_eq!(r, MprotectReport { outcome: MprotectOutcome::SpeculativeSuccess, retries: 0 });
    let after = s.layout();
    assert_eq!(after, vec![vma(0, 0x2000, Prot::RW), vma(0x2000, 0x3000, Prot::READ)]);
    assert_eq!(after[0].end - before[0].end, 0x1000);
    assert_eq!(s.seq(), seq, "no structural change");

    let mut oracle = PageMap::from_layout(0, &before);
    oracle.apply(VmaOp::Mprotect { addr: 0x1800, size: 4096, prot: Prot::RW });
    assert_eq!(oracle.layout(), after);
}

#[test]
fn tail_shift_into_next() {
    let s = space(&[vma(0, 0x3000, Prot::READ), vma(0x3000, 0x4000, Prot::NONE)]);
    let r = s.mprotect(0x2000, 0x1000, Prot::NONE).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::SpeculativeSuccess);
    assert_eq!(s.layout(), vec![vma(0, 0x2000, Prot::READ), vma(0x2000, 0x4000, Prot::NONE)]);
}

#[test]
fn interior_change_splits_on_full_path() {
    let s = space(&[vma(0x1000, 0x5000, Prot::READ)]);
    let seq = s.seq();
    let r = s.mprotect(0x2000, 0x1000, Prot::RW).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::FullPathSuccess);
    assert_eq!(s.seq(), seq + 1);
    assert_eq!(
        s.layout(),
        vec![vma(0x1000, 0x2000, Prot::READ), vma(0x2000, 0x3000, Prot::RW), vma(0x3000, 0x5000, Prot::READ)]
    );
}

#[test]
fn whole_vma_flag_change() {
    let s = space(&[vma(0, 0x1000, Prot::READ), vma(0x1000, 0x2000, Prot::NONE), vma(0x2000, 0x3000, Prot::READ)]);
    // Differs from both neighbours after the change: in place.
    let r = s.mprotect(0x1000, 0x1000, Prot::RW).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::SpeculativeSuccess);
    // Equal to the neighbours: merge, so structural.
    let r = s.mprotect(0x1000, 0x1000, Prot::READ).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::FullPathSuccess);
    assert_eq!(s.layout(), vec![vma(0, 0x3000, Prot::READ)]);
}

#[test]
fn same_prot_is_a_speculative_noop() {
    let s = space(&[vma(0, 0x4000, Prot::READ)]);
    let r = s.mprotect(0x1000, 0x1000, Prot::READ).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::SpeculativeSuccess);
    assert_eq!(s.layout(), vec![vma(0, 0x4000, Prot::READ)]);
}

#[test]
fn errors() {
    let s = space(&[vma(0x1000, 0x2000, Prot::READ), vma(0x3000, 0x4000, Prot::READ)]);
    assert_eq!(s.mprotect(0x1000, 0, Prot::RW), Err(VmaError::ZeroSize));
    assert_eq!(s.mprotect(0x1000, 10, Prot::RW), Err(VmaError::Unaligned(10)));
    assert_eq!(
        s.mprotect(0x1000, 0x3000, Prot::RW),
        Err(VmaError::NotMapped { start: 0x1000, end: 0x4000 })
    );
    assert_eq!(s.mprotect(0, 0x1000, Prot::RW), Err(VmaError::NotMapped { start: 0, end: 0x1000 }));
    assert_eq!(s.mprotect(0x5000, 0x1000, Prot::RW), Err(VmaError::NotMapped { start: 0x5000, end: 0x6000 }));
    assert_eq!(s.munmap(0x1000, 0x2000), Err(VmaError::NotMapped { start: 0x1000, end: 0x3000 }));
    assert_eq!(s.mmap_fixed(0x1000, 0x1000, Prot::RW), Err(VmaError::Overlap { start: 0x1000, end: 0x2000 }));
    assert_eq!(s.layout().len(), 2);
}

#[test]
fn page_faults() {
    let s = space(&[vma(0x1000, 0x2000, Prot::READ), vma(0x2000, 0x3000, Prot::RW)]);
    assert_eq!(s.page_fault(0x1800, Access::Read), FaultOutcome::Ok);
    assert_eq!(s.page_fault(0x1800, Access::Write), FaultOutcome::SegfaultSim);
    assert_eq!(s.page_fault(0x2fff, Access::Write), FaultOutcome::Ok);
    assert_eq!(s.page_fault(0x10, Access::Read), FaultOutcome::SegfaultSim);
    assert_eq!(s.page_fault(0x3000, Access::Read), FaultOutcome::SegfaultSim);
}

#[test]
fn mmap_lowest_fit_and_merge() {
    let s = AddressSpace::new(VmaConfig { mmap_base: 0x10000, ..VmaConfig::default() });
    assert_eq!(s.mmap(0x2000, Prot::READ).unwrap(), 0x10000);
    // Adjacent with equal protection: merged.
    assert_eq!(s.mmap(0x1000, Prot::READ).unwrap(), 0x12000);
    assert_eq!(s.layout(), vec![vma(0x10000, 0x13000, Prot::READ)]);
    s.munmap(0x11000, 0x1000).unwrap();
    // The hole is reused.
    assert_eq!(s.mmap(0x1000, Prot::RW).unwrap(), 0x11000);
    assert_eq!(s.mmap(0x2000, Prot::RW).unwrap(), 0x13000);
    s.check().unwrap();
    s.munmap(0x10000, 0x5000).unwrap();
    assert!(s.layout().is_empty());
}

#[test]
fn seq_counts_full_writes() {
    let s = AddressSpace::default();
    let a = s.mmap(0x4000, Prot::READ).unwrap();
    assert_eq!(s.seq(), 1);
    s.mprotect(a, 0x1000, Prot::READ).unwrap();
    assert_eq!(s.seq(), 1);
    s.munmap(a, 0x1000).unwrap();
    assert_eq!(s.seq(), 2);
}

#[test]
fn retry_cap_forces_full_path() {
    let cfg = VmaConfig { mmap_base: 0, max_retries: Some(0), ..VmaConfig::default() };
    let s = AddressSpace::with_layout(cfg, &[vma(0, 0x1000, Prot::RW), vma(0x1000, 0x3000, Prot::READ)]);
    let r = s.mprotect(0x1000, 0x1000, Prot::RW).unwrap();
    assert_eq!(r.outcome, MprotectOutcome::FullPathSuccess);
    assert_eq!(s.layout(), vec![vma(0, 0x2000, Prot::RW), vma(0x2000, 0x3000, Prot::READ)]);
}

#[test]
fn disjoint_mprotects_run_in_parallel() {
    // Hold the widened write range of the first VMA's speculation by hand and
    // check that a speculation on a distant VMA still completes.
    let s = space(&[
        vma(0, 0x2000, Prot::READ),
        vma(0x2000, 0x4000, Prot::RW),
        vma(0x10000, 0x12000, Prot::READ),
        vma(0x12000, 0x14000, Prot::RW),
    ]);
    let held = s.lock().write(0, 0x5000).unwrap();
    std::thread::scope(|sc| {
        let h = sc.spawn(|| s.mprotect(0x12000, 0x1000, Prot::READ).unwrap());
        assert_eq!(h.join().unwrap().outcome, MprotectOutcome::SpeculativeSuccess);
        assert_eq!(s.page_fault(0x10000, Access::Read), FaultOutcome::Ok);
    });
    drop(held);
}

#[test]
fn neighbour_shifts_serialize() {
    // Two threads repeatedly move the shared boundary of neighbouring VMAs
    // from opposite sides; the widened lock ranges overlap so every shift
    // sees a consistent neighbour.
    let s = space(&[vma(0, 0x8000, Prot::READ), vma(0x8000, 0x10000, Prot::RW)]);
    std::thread::scope(|sc| {
        sc.spawn(|| {
            for _ in 0..500 {
                let l = s.layout();
                let b = l[0].end;
                if b > 0x1000 {
                    let _ = s.mprotect(b - 0x1000, 0x1000, Prot::RW);
                }
            }
        });
        sc.spawn(|| {
            for _ in 0..500 {
                let l = s.layout();
                let b = l[0].end;
                if b < 0xf000 {
                    let _ = s.mprotect(b, 0x1000, Prot::READ);
                }
            }
        });
    });
    let l = s.layout();
    s.check().unwrap();
    assert_eq!(l.len(), 2);
    assert_eq!((l[0].start, l[1].end), (0, 0x10000));
}

fn prot() -> impl Strategy<Value = Prot> {
    (0u8..4).prop_map(Prot::from_bits)
}

fn op() -> impl Strategy<Value = VmaOp> {
    let page = |n: u64| (0..n).prop_map(|p| p * PAGE_SIZE);
    prop_oneof![
        ((1u64..4), prot()).prop_map(|(n, prot)| VmaOp::Mmap { size: n * PAGE_SIZE, prot }),
        (page(24), 1u64..4, prot()).prop_map(|(addr, n, prot)| VmaOp::MmapFixed { addr, size: n * PAGE_SIZE, prot }),
        (page(24), 1u64..4).prop_map(|(addr, n)| VmaOp::Munmap { addr, size: n * PAGE_SIZE }),
        (0u64..24 * PAGE_SIZE, 1u64..5, prot())
            .prop_map(|(addr, n, prot)| VmaOp::Mprotect { addr, size: n * PAGE_SIZE, prot }),
        (0u64..24 * PAGE_SIZE).prop_map(|addr| VmaOp::PageFault { addr, access: Access::Read }),
    ]
}

fn apply(s: &AddressSpace, op: VmaOp) -> OpResult {
    let done = |r: Result<(), VmaError>| r.map_or_else(OpResult::Failed, |_| OpResult::Done);
    match op {
        VmaOp::Mmap { size, prot } => s.mmap(size, prot).map_or_else(OpResult::Failed, OpResult::Mapped),
        VmaOp::MmapFixed { addr, size, prot } => done(s.mmap_fixed(addr, size, prot)),
        VmaOp::Munmap { addr, size } => done(s.munmap(addr, size)),
        VmaOp::Mprotect { addr, size, prot } => done(s.mprotect(addr, size, prot).map(drop)),
        VmaOp::PageFault { addr, access } => OpResult::Fault(s.page_fault(addr, access)),
    }
}

proptest! {
    #[test]
    fn empty_tape_leaves_state(layout in proptest::collection::vec(prot(), 0..6)) {
        let l: Vec<Vma> = layout.iter().enumerate()
            .map(|(i, &p)| vma(i as u64 * 0x2000, i as u64 * 0x2000 + 0x1000, p)).collect();
        let s = space(&l);
        prop_assert_eq!(s.layout(), PageMap::from_layout(0, &l).layout());
    }

    #[test]
    fn matches_page_oracle(ops in proptest::collection::vec(op(), 0..80)) {
        let s = space(&[]);
        let mut oracle = PageMap::new(0);
        for op in ops {
            let want = oracle.apply(op);
            prop_assert_eq!(apply(&s, op), want, "{:?}", op);
            prop_assert_eq!(s.layout(), oracle.layout());
            prop_assert!(s.check().is_ok());
        }
    }
}
