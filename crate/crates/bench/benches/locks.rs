use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rangelock::baseline::{SegmentRangeLock, TreeRangeLock};
use rangelock::list::ListConfig;
use rangelock::skiplist::RangeSkipList;
use rangelock::vma::{AddressSpace, Prot, Vma, VmaConfig, PAGE_SIZE};
use rangelock::{Range, RangeLock, RangeLocking, RwRangeLock};

fn acquire_release<L: RangeLocking>(c: &mut Criterion, lock: &L, label: &str) {
    let r = Range::write(16, 48).unwrap();
    c.bench_function(&format!("uncontended/{label}"), |b| b.iter(|| drop(black_box(lock.lock_range(&r)))));
}

fn uncontended(c: &mut Criterion) {
    acquire_release(c, &RangeLock::new(), "list-ex");
    acquire_release(c, &RangeLock::with_config(ListConfig::default().fast_path(false)), "list-ex-no-fast-path");
    acquire_release(c, &RwRangeLock::new(), "list-rw");
    acquire_release(c, &TreeRangeLock::exclusive(), "lustre-ex");
    acquire_release(c, &TreeRangeLock::reader_writer(), "kernel-rw");
    acquire_release(c, &SegmentRangeLock::new(SegmentRangeLock::DEFAULT_SEGMENTS, 256), "pnova-rw");
}

/// Acquire behind `held` disjoint holders, so the traversal length grows.
fn traversal(c: &mut Criterion) {
    let mut g = c.benchmark_group("behind-holders");
    for held in [1u64, 8, 64] {
        let lock = RwRangeLock::new();
        let _guards: Vec<_> = (0..held).map(|i| lock.read(i * 2, i * 2 + 1).unwrap()).collect();
        let r = Range::read(held * 2, held * 2 + 1).unwrap();
        g.bench_with_input(BenchmarkId::new("list-rw", held), &r, |b, r| b.iter(|| drop(lock.lock(r))));
        let tree = TreeRangeLock::reader_writer();
        let _tg: Vec<_> = (0..held).map(|i| tree.lock_range(&Range::read(i * 2, i * 2 + 1).unwrap())).collect();
        g.bench_with_input(BenchmarkId::new("kernel-rw", held), &r, |b, r| b.iter(|| drop(tree.lock_range(r))));
    }
    g.finish();
}

fn skiplist(c: &mut Criterion) {
    let list = RangeSkipList::new(RangeLock::new());
    for k in (0..4096).step_by(2) {
        list.insert(k);
    }
    let mut k = 0u64;
    c.bench_function("skiplist/contains", |b| {
        b.iter(|| {
            k = (k + 7919) % 4096;
            black_box(list.contains(k))
        })
    });
    c.bench_function("skiplist/insert-remove", |b| {
        b.iter(|| {
            k = ((k + 7919) % 4096) | 1;
            list.insert(k);
            list.remove(k)
        })
    });
}

fn mprotect(c: &mut Criterion) {
    let base = 0x10_0000;
    let layout = [
        Vma { start: base, end: base + PAGE_SIZE, prot: Prot::RW },
        Vma { start: base + PAGE_SIZE, end: base + 64 * PAGE_SIZE, prot: Prot::NONE },
    ];
    let space = AddressSpace::with_layout(VmaConfig::default(), &layout);
    c.bench_function("mprotect/boundary-shift", |b| {
        b.iter(|| {
            space.mprotect(base + PAGE_SIZE, PAGE_SIZE, Prot::RW).unwrap();
            space.mprotect(base + PAGE_SIZE, PAGE_SIZE, Prot::NONE).unwrap()
        })
    });
    c.bench_function("mprotect/interior-split", |b| {
        b.iter(|| {
            space.mprotect(base + 8 * PAGE_SIZE, PAGE_SIZE, Prot::READ).unwrap();
            space.mprotect(base + 8 * PAGE_SIZE, PAGE_SIZE, Prot::NONE).unwrap()
        })
    });
}

criterion_group!(benches, uncontended, traversal, skiplist, mprotect);
criterion_main!(benches);
