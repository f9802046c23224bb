//! Set workload over a skip list: a configurable share of updates, split
//! evenly between inserts and removes, the rest lookups, on uniform keys.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rangelock::skiplist::RangeSkipList;
use rangelock::stats::{self, Counter};
use rangelock::RangeLocking;

use crate::orig_skiplist::OrigSkipList;
use crate::{run_workers, BenchConfig, LockImpl, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOp {
    Insert,
    Remove,
    Contains,
}

pub fn draw_op<R: Rng>(rng: &mut R, update_pct: u32, key_range: u64) -> (SetOp, u64) {
    let r = rng.gen_range(0..200);
    let op = if r < update_pct {
        SetOp::Insert
    } else if r < 2 * update_pct {
        SetOp::Remove
    } else {
        SetOp::Contains
    };
    (op, rng.gen_range(0..key_range))
}

pub trait ConcurrentSet: Sync {
    fn insert(&self, key: u64) -> bool;
    fn remove(&self, key: u64) -> bool;
    fn contains(&self, key: u64) -> bool;
    fn keys(&self) -> Vec<u64>;
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl<L: RangeLocking> ConcurrentSet for RangeSkipList<L> {
    fn insert(&self, key: u64) -> bool {
        RangeSkipList::insert(self, key)
    }
    fn remove(&self, key: u64) -> bool {
        RangeSkipList::remove(self, key)
    }
    fn contains(&self, key: u64) -> bool {
        RangeSkipList::contains(self, key)
    }
    fn keys(&self) -> Vec<u64> {
        RangeSkipList::keys(self)
    }
    fn check(&self) -> Result<(), String> {
        RangeSkipList::check(self)
    }
}

impl ConcurrentSet for OrigSkipList {
    fn insert(&self, key: u64) -> bool {
        OrigSkipList::insert(self, key)
    }
    fn remove(&self, key: u64) -> bool {
        OrigSkipList::remove(self, key)
    }
    fn contains(&self, key: u64) -> bool {
        OrigSkipList::contains(self, key)
    }
    fn keys(&self) -> Vec<u64> {
        OrigSkipList::keys(self)
    }
}

/// Insert distinct random keys until half the key range is present.
pub fn prefill<S: ConcurrentSet>(set: &S, key_range: u64, seed: u64) -> u64 {
    let mut rng = SmallRng::seed_from_u64(seed);
    let target = key_range / 2;
    let mut n = 0;
    while n < target {
        if set.insert(rng.gen_range(0..key_range)) {
            n += 1;
        }
    }
    n
}

pub fn worker_rng(seed: u64, t: usize) -> SmallRng {
    SmallRng::seed_from_u64(seed ^ (t as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[derive(Default)]
struct Tally {
    ops: u64,
    inserted: u64,
    removed: u64,
    updates: u64,
    locks: u64,
}

pub fn run_set<S: ConcurrentSet>(cfg: &BenchConfig, set: &S, node_bytes: usize) -> RunResult {
    let initial = prefill(set, cfg.key_range, cfg.seed);
    let (tallies, secs) = run_workers(cfg, |t, ctl| {
        let mut rng = worker_rng(cfg.seed, t);
        let mut tally = Tally::default();
        let before = stats::get(Counter::SkipListLock);
        while ctl.keep_going(tally.ops) {
            let (op, key) = draw_op(&mut rng, cfg.update_pct, cfg.key_range);
            match op {
                SetOp::Insert => {
                    tally.updates += 1;
                    tally.inserted += set.insert(key) as u64;
                }
                SetOp::Remove => {
                    tally.updates += 1;
                    tally.removed += set.remove(key) as u64;
                }
                SetOp::Contains => {
                    std::hint::black_box(set.contains(key));
                }
            }
            tally.ops += 1;
        }
        tally.locks = stats::get(Counter::SkipListLock) - before;
        tally
    });
    let mut violations = Vec::new();
    let inserted: u64 = tallies.iter().map(|t| t.inserted).sum();
    let removed: u64 = tallies.iter().map(|t| t.removed).sum();
    let keys = set.keys();
    let want = initial + inserted - removed;
    if keys.len() as u64 != want {
        violations.push(format!("set holds {} keys, expected {want}", keys.len()));
    }
    if let Err(e) = set.check() {
        violations.push(e);
    }
    let updates: u64 = tallies.iter().map(|t| t.updates).sum();
    let mut metrics =
        vec![("final_size", keys.len() as f64), ("updates", updates as f64), ("node_bytes", node_bytes as f64)];
    if stats::ENABLED {
        metrics.push(("range_locks", tallies.iter().map(|t| t.locks).sum::<u64>() as f64));
    }
    RunResult { ops_per_thread: tallies.iter().map(|t| t.ops).collect(), secs, violations, metrics }
}

/// The skip list owns its lock, so this builds locks by value instead of
/// going through [`crate::with_lock`].
pub fn run(cfg: &BenchConfig) -> RunResult {
    use rangelock::baseline::{SegmentRangeLock, TreeRangeLock};
    use rangelock::fairness::FairRangeLock;
    use rangelock::{RangeLock, RwRangeLock};
    let span = cfg.key_range + 2;
    let orig = crate::orig_skiplist::node_bytes(1);
    let rl = rangelock::skiplist::node_bytes(1);
    match (cfg.lock, cfg.patience) {
        (LockImpl::Orig, _) => run_set(cfg, &OrigSkipList::new(), orig),
        (LockImpl::ListEx, None) => run_set(cfg, &RangeSkipList::new(RangeLock::new()), rl),
        (LockImpl::ListEx, Some(p)) => run_set(cfg, &RangeSkipList::new(FairRangeLock::new(RangeLock::new(), p)), rl),
        (LockImpl::ListRw, None) => run_set(cfg, &RangeSkipList::new(RwRangeLock::new()), rl),
        (LockImpl::ListRw, Some(p)) => run_set(cfg, &RangeSkipList::new(FairRangeLock::new(RwRangeLock::new(), p)), rl),
        (LockImpl::LustreEx, _) => run_set(cfg, &RangeSkipList::new(TreeRangeLock::exclusive()), rl),
        (LockImpl::KernelRw, _) => run_set(cfg, &RangeSkipList::new(TreeRangeLock::reader_writer()), rl),
        (LockImpl::PnovaRw, _) => run_set(
            cfg,
            &RangeSkipList::new(SegmentRangeLock::new(SegmentRangeLock::DEFAULT_SEGMENTS, span)),
            rl,
        ),
    }
}
