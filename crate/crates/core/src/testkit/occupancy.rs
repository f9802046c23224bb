//! Shadow occupancy: every slot covered by a held range counts its readers
//! and writers, and each acquirer checks that nobody incompatible is inside.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Barrier;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use super::random_range;
use crate::range::{Mode, Range};
use crate::RangeLocking;

#[derive(Clone, Copy, Debug)]
pub struct OccupancyConfig {
    pub threads: usize,
    pub ops_per_thread: u64,
    pub slots: u64,
    pub read_pct: u32,
    /// Quiescent checkpoints; ops are split into this many phases.
    pub phases: u32,
    pub seed: u64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        OccupancyConfig { threads: 4, ops_per_thread: 10_000, slots: 256, read_pct: 50, phases: 4, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OccupancyReport {
    pub ops: u64,
    pub violations: u64,
    pub checkpoints: u32,
    pub checkpoint_failures: u32,
}

#[derive(Default)]
struct Slot {
    readers: AtomicU32,
    writers: AtomicU32,
}

/// Run the harness. `checkpoint` runs on one thread between phases while
/// every worker is parked and holds nothing; it returns false on a broken
/// invariant.
pub fn run<L: RangeLocking>(
    lock: &L,
    cfg: &OccupancyConfig,
    checkpoint: impl Fn(&L) -> bool + Sync,
) -> OccupancyReport {
    let slots: Vec<Slot> = (0..cfg.slots).map(|_| Slot::default()).collect();
    let violations = AtomicU64::new(0);
    let failures = AtomicU32::new(0);
    let barrier = Barrier::new(cfg.threads);
    let phases = cfg.phases.max(1);
    let per_phase = cfg.ops_per_thread.div_ceil(phases as u64);
    std::thread::scope(|s| {
        for t in 0..cfg.threads {
            let (slots, violations, failures, barrier, checkpoint) =
                (&slots, &violations, &failures, &barrier, &checkpoint);
            s.spawn(move || {
                let mut rng = SmallRng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(t as u64));
                let mut done = 0;
                for _ in 0..phases {
                    let n = per_phase.min(cfg.ops_per_thread - done);
                    for _ in 0..n {
                        let (a, b) = random_range(&mut rng, cfg.slots);
                        let reader = lock.shared_mode() && rng.gen_range(0..100) < cfg.read_pct;
                        let mode = if reader { Mode::Reader } else { Mode::Writer };
                        let range = Range::new(a, b, mode).expect("non-empty");
                        let g = lock.lock_range(&range);
                        let mut bad = 0;
                        for slot in &slots[a as usize..b as usize] {
                            if reader {
                                slot.readers.fetch_add(1, Ordering::SeqCst);
                                bad += (slot.writers.load(Ordering::SeqCst) != 0) as u64;
                            } else {
                                let w = slot.writers.fetch_add(1, Ordering::SeqCst);
                                let r = slot.readers.load(Ordering::SeqCst);
                                bad += (w != 0 || r != 0) as u64;
                            }
                        }
                        if rng.gen_ratio(1, 16) {
                            std::thread::yield_now();
                        }
                        for slot in &slots[a as usize..b as usize] {
                            if reader {
                                slot.readers.fetch_sub(1, Ordering::SeqCst);
                            } else {
                                slot.writers.fetch_sub(1, Ordering::SeqCst);
                            }
                        }
                        drop(g);
                        if bad > 0 {
                            violations.fetch_add(bad, Ordering::Relaxed);
                        }
                    }
                    done += n;
                    if barrier.wait().is_leader() && !checkpoint(lock) {
                        failures.fetch_add(1, Ordering::Relaxed);
                    }
                    barrier.wait();
                }
            });
        }
    });
    OccupancyReport {
        ops: cfg.ops_per_thread * cfg.threads as u64,
        violations: violations.into_inner(),
        checkpoints: phases,
        checkpoint_failures: failures.into_inner(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RangeLock;

    /// Grants everything immediately; the harness must notice.
    struct NoLock;

    impl RangeLocking for NoLock {
        type Guard<'a> = ();
        fn lock_range(&self, _: &Range) {}
        fn shared_mode(&self) -> bool {
            false
        }
        fn name(&self) -> &'static str {
            "none"
        }
    }

    #[test]
    fn detects_missing_exclusion() {
        let cfg = OccupancyConfig { threads: 4, ops_per_thread: 20_000, ..Default::default() };
        let r = run(&NoLock, &cfg, |_| true);
        assert!(r.violations > 0);
    }

    #[test]
    fn list_lock_is_clean() {
        let cfg = OccupancyConfig { threads: 4, ops_per_thread: 5_000, ..Default::default() };
        let r = run(&RangeLock::new(), &cfg, |l| crate::list::check_quiescent_order(&l.quiescent_snapshot()).is_ok());
        assert_eq!(r, OccupancyReport { ops: 20_000, violations: 0, checkpoints: 4, checkpoint_failures: 0 });
    }
}
