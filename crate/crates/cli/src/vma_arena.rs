//! Allocator-arena workload on the simulated address space.
//!
//! Each thread owns one mapping that starts inaccessible except for a
//! read-write prefix. Threads grow and shrink their prefix with `mprotect`
//! and fault on random pages of their own arena. Arenas are separated by
//! unmapped gaps so they never merge.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rangelock::vma::oracle::{PageMap, VmaOp};
use rangelock::vma::{Access, AddressSpace, FaultOutcome, MprotectOutcome, Prot, Vma, VmaConfig, PAGE_SIZE};

use crate::{run_workers, BenchConfig, RunResult};

pub const ARENA_BASE: u64 = 0x4000_0000;
pub const GAP_PAGES: u64 = 16;
pub const MAX_STEP_PAGES: u64 = 4;

pub fn arena_base(t: usize, arena_pages: u64) -> u64 {
    ARENA_BASE + t as u64 * (arena_pages + GAP_PAGES) * PAGE_SIZE
}

/// The mappings of `layout` inside thread `t`'s arena.
pub fn arena_window(layout: &[Vma], t: usize, pages: u64) -> Vec<Vma> {
    let base = arena_base(t, pages);
    let end = base + pages * PAGE_SIZE;
    layout.iter().filter(|v| v.start < end && v.end > base).copied().collect()
}

#[derive(Default)]
struct Worker {
    ops: u64,
    mprotects: u64,
    speculative: u64,
    retries: u64,
    wrong_faults: u64,
    errors: Vec<String>,
    oracle: Option<PageMap>,
}

/// Map one arena per thread with a one-page read-write prefix.
pub fn setup(space: &AddressSpace, threads: usize, pages: u64) {
    for t in 0..threads {
        let base = arena_base(t, pages);
        space.mmap_fixed(base, pages * PAGE_SIZE, Prot::NONE).expect("arena slot is free");
        space.mprotect(base, PAGE_SIZE, Prot::RW).expect("arena is mapped");
    }
}

pub fn run(cfg: &BenchConfig) -> RunResult {
    let space = AddressSpace::new(VmaConfig::default());
    let pages = cfg.arena_pages;
    setup(&space, cfg.threads, pages);
    let start_layout = space.layout();
    let (workers, secs) = run_workers(cfg, |t, ctl| {
        let base = arena_base(t, pages);
        let mut rng = SmallRng::seed_from_u64(cfg.seed ^ (t as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D));
        let mut w = Worker::default();
        let mut oracle = PageMap::from_layout(0, &arena_window(&start_layout, t, pages));
        let mut prefix = 1u64;
        while ctl.keep_going(w.ops) {
            w.ops += 1;
            if rng.gen_range(0..100) < cfg.read_pct {
                let page = rng.gen_range(0..pages);
                let addr = base + page * PAGE_SIZE + rng.gen_range(0..PAGE_SIZE);
                let want = if page < prefix { FaultOutcome::Ok } else { FaultOutcome::SegfaultSim };
                if space.page_fault(addr, Access::Write) != want {
                    w.wrong_faults += 1;
                }
                continue;
            }
            let k = rng.gen_range(1..=MAX_STEP_PAGES);
            let grow = if prefix + k > pages - 1 {
                false
            } else if prefix <= k {
                true
            } else {
                rng.gen_bool(0.5)
            };
            let (addr, prot) = if grow {
                (base + prefix * PAGE_SIZE, Prot::RW)
            } else {
                (base + (prefix - k) * PAGE_SIZE, Prot::NONE)
            };
            match space.mprotect(addr, k * PAGE_SIZE, prot) {
                Ok(r) => {
                    w.mprotects += 1;
                    w.retries += r.retries as u64;
                    w.speculative += (r.outcome == MprotectOutcome::SpeculativeSuccess) as u64;
                }
                Err(e) => w.errors.push(format!("thread {t}: mprotect({addr:#x}) failed: {e}")),
            }
            oracle.apply(VmaOp::Mprotect { addr, size: k * PAGE_SIZE, prot });
            prefix = if grow { prefix + k } else { prefix - k };
        }
        w.oracle = Some(oracle);
        w
    });
    let mut violations = Vec::new();
    let end_layout = space.layout();
    for (t, w) in workers.iter().enumerate() {
        violations.extend(w.errors.iter().cloned());
        if w.wrong_faults > 0 {
            violations.push(format!("thread {t}: {} page faults disagreed with the arena prefix", w.wrong_faults));
        }
        let got = arena_window(&end_layout, t, pages);
        let want = w.oracle.as_ref().unwrap().layout();
        if got != want {
            violations.push(format!("thread {t}: layout {got:?} but oracle replay gives {want:?}"));
        }
    }
    if let Err(e) = space.check() {
        violations.push(e);
    }
    let mprotects: u64 = workers.iter().map(|w| w.mprotects).sum();
    let speculative: u64 = workers.iter().map(|w| w.speculative).sum();
    let metrics = vec![
        ("mprotects", mprotects as f64),
        ("speculative", speculative as f64),
        ("speculation_rate", if mprotects > 0 { speculative as f64 / mprotects as f64 } else { 1.0 }),
        ("retries", workers.iter().map(|w| w.retries).sum::<u64>() as f64),
    ];
    RunResult { ops_per_thread: workers.iter().map(|w| w.ops).collect(), secs, violations, metrics }
}
