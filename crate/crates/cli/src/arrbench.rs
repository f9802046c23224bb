//! Array benchmark: threads lock ranges of a slot array, readers sum the
//! slots and writers increment them.
//!
//! Writers increment with a plain load and store, so any exclusion failure
//! shows up as a lost update when the slots are compared with the
//! per-thread tallies at the end.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rangelock::stats::{self, Counter};
use rangelock::testkit::random_range;
use rangelock::{Mode, Range, RangeLocking};

use crate::{noop_work, run_workers, with_lock, BenchConfig, Benchmark, RunResult, WithLock};

/// Slot array with one slot per cache line.
pub struct Slots {
    data: Box<[AtomicU64]>,
    stride: usize,
    len: usize,
}

impl Slots {
    pub fn new(len: usize, cache_line: usize) -> Self {
        let stride = (cache_line / 8).max(1);
        Slots { data: (0..len * stride).map(|_| AtomicU64::new(0)).collect(), stride, len }
    }

    #[inline]
    pub fn slot(&self, i: usize) -> &AtomicU64 {
        &self.data[i * self.stride]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> Vec<u64> {
        (0..self.len).map(|i| self.slot(i).load(Ordering::Relaxed)).collect()
    }
}

/// The range an operation locks and how many passes it makes over it.
pub fn op_range<R: Rng>(bench: Benchmark, rng: &mut R, slots: u64, threads: usize, t: usize) -> (u64, u64, u64) {
    match bench {
        Benchmark::ArrbenchFull => (0, slots, 1),
        Benchmark::ArrbenchDisjoint => {
            let part = slots / threads as u64;
            (t as u64 * part, (t as u64 + 1) * part, threads as u64)
        }
        Benchmark::ArrbenchRandom => {
            let (a, b) = random_range(rng, slots);
            (a, b, 1)
        }
        _ => unreachable!("not an array benchmark"),
    }
}

struct Worker {
    ops: u64,
    tally: Vec<u64>,
    bad_touches: u64,
    fast: u64,
    slow: u64,
}

struct Arr<'a> {
    cfg: &'a BenchConfig,
}

impl WithLock for Arr<'_> {
    type Out = RunResult;

    fn run<L: RangeLocking>(self, lock: &L) -> RunResult {
        let cfg = self.cfg;
        let n = cfg.slots as usize;
        let slots = Slots::new(n, cfg.cache_line);
        let per_op = (cfg.slots / cfg.threads as u64) * cfg.threads as u64;
        let (workers, secs) = run_workers(cfg, |t, ctl| {
            let mut rng = SmallRng::seed_from_u64(cfg.seed ^ (t as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F));
            let mut w = Worker { ops: 0, tally: vec![0; n], bad_touches: 0, fast: 0, slow: 0 };
            let before = stats::snapshot();
            while ctl.keep_going(w.ops) {
                let reader = rng.gen_range(0..100) < cfg.read_pct;
                let (a, b, reps) = op_range(cfg.benchmark, &mut rng, cfg.slots, cfg.threads, t);
                let mode = if reader { Mode::Reader } else { Mode::Writer };
                let range = Range::new(a, b, mode).expect("non-empty range");
                let g = lock.lock_range(&range);
                if reader {
                    let mut sum = 0u64;
                    for _ in 0..reps {
                        for i in a as usize..b as usize {
                            sum = sum.wrapping_add(slots.slot(i).load(Ordering::Relaxed));
                        }
                    }
                    std::hint::black_box(sum);
                } else {
                    for _ in 0..reps {
                        for i in a as usize..b as usize {
                            let s = slots.slot(i);
                            s.store(s.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
                        }
                    }
                }
                drop(g);
                if !reader {
                    for c in &mut w.tally[a as usize..b as usize] {
                        *c += reps;
                    }
                }
                if cfg.benchmark == Benchmark::ArrbenchDisjoint && (b - a) * reps != per_op {
                    w.bad_touches += 1;
                }
                if cfg.noop_max > 0 {
                    noop_work(rng.gen_range(0..cfg.noop_max));
                }
                w.ops += 1;
            }
            let d = stats::snapshot().since(&before);
            w.fast = d.get(Counter::FastPathAcquire);
            w.slow = d.get(Counter::SlowPathAcquire);
            w
        });
        let mut violations = Vec::new();
        let finals = slots.values();
        for (i, &v) in finals.iter().enumerate() {
            let want: u64 = workers.iter().map(|w| w.tally[i]).sum();
            if v != want {
                violations.push(format!("slot {i}: value {v} but writers tallied {want}"));
            }
        }
        let bad: u64 = workers.iter().map(|w| w.bad_touches).sum();
        if bad > 0 {
            violations.push(format!("{bad} disjoint operations touched other than {per_op} slots"));
        }
        let mut metrics = vec![("slot_writes", finals.iter().sum::<u64>() as f64)];
        if stats::ENABLED {
            metrics.push(("fast_path_acquires", workers.iter().map(|w| w.fast).sum::<u64>() as f64));
            metrics.push(("slow_path_acquires", workers.iter().map(|w| w.slow).sum::<u64>() as f64));
        }
        RunResult { ops_per_thread: workers.iter().map(|w| w.ops).collect(), secs, violations, metrics }
    }
}

pub fn run(cfg: &BenchConfig) -> RunResult {
    with_lock(cfg.lock, cfg.slots, cfg.patience, Arr { cfg })
}
