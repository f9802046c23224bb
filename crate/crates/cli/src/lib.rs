//! Benchmark harness for the range locks: array benchmarks in three access
//! regimes, a skip-list set workload and a VMA arena workload, with CSV
//! output.

pub mod arrbench;
pub mod config;
pub mod orig_skiplist;
pub mod report;
pub mod skiplist_bench;
pub mod vma_arena;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use rangelock::baseline::{SegmentRangeLock, TreeRangeLock};
use rangelock::fairness::FairRangeLock;
use rangelock::{RangeLock, RangeLocking, RwRangeLock};

pub use config::{Benchmark, BenchConfig, ConfigError, LockImpl};
pub use report::Record;

/// Outcome of one run of one configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResult {
    pub ops_per_thread: Vec<u64>,
    pub secs: f64,
    /// Invariant violations detected during or after the run.
    pub violations: Vec<String>,
    /// Benchmark-specific measurements, e.g. speculation success rate.
    pub metrics: Vec<(&'static str, f64)>,
}

impl RunResult {
    pub fn ops(&self) -> u64 {
        self.ops_per_thread.iter().sum()
    }

    pub fn throughput(&self) -> f64 {
        if self.secs > 0.0 {
            self.ops() as f64 / self.secs
        } else {
            0.0
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

/// Code that runs against whichever lock the configuration names.
pub trait WithLock {
    type Out;
    fn run<L: RangeLocking>(self, lock: &L) -> Self::Out;
}

/// Build the lock named by `imp` over `[0, span)` and hand it to `w`.
///
/// # Panics
/// For [`LockImpl::Orig`], which is not a range lock.
pub fn with_lock<W: WithLock>(imp: LockImpl, span: u64, patience: Option<u32>, w: W) -> W::Out {
    match (imp, patience) {
        (LockImpl::ListEx, None) => w.run(&RangeLock::new()),
        (LockImpl::ListEx, Some(p)) => w.run(&FairRangeLock::new(RangeLock::new(), p)),
        (LockImpl::ListRw, None) => w.run(&RwRangeLock::new()),
        (LockImpl::ListRw, Some(p)) => w.run(&FairRangeLock::new(RwRangeLock::new(), p)),
        (LockImpl::LustreEx, _) => w.run(&TreeRangeLock::exclusive()),
        (LockImpl::KernelRw, _) => w.run(&TreeRangeLock::reader_writer()),
        (LockImpl::PnovaRw, _) => w.run(&SegmentRangeLock::new(SegmentRangeLock::DEFAULT_SEGMENTS, span)),
        (LockImpl::Orig, _) => panic!("orig is not a range lock"),
    }
}

/// Run one repetition of `cfg`. `run` selects the seed stream.
pub fn run_once(cfg: &BenchConfig, run: u32) -> Result<RunResult, ConfigError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.seed = cfg.seed.wrapping_add((run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    Ok(match cfg.benchmark {
        Benchmark::ArrbenchFull | Benchmark::ArrbenchDisjoint | Benchmark::ArrbenchRandom => arrbench::run(&cfg),
        Benchmark::Skiplist => skiplist_bench::run(&cfg),
        Benchmark::VmaArena => vma_arena::run(&cfg),
    })
}

/// Stop condition shared by the workers of one run.
pub struct Control {
    stop: AtomicBool,
    limit: Option<u64>,
}

impl Control {
    /// Whether a worker that has completed `done` operations should continue.
    #[inline]
    pub fn keep_going(&self, done: u64) -> bool {
        match self.limit {
            Some(n) => done < n,
            None => !self.stop.load(Ordering::Relaxed),
        }
    }
}

/// Spawn `cfg.threads` workers, release them together and stop them after
/// the configured duration or operation count. Returns each worker's output
/// and the seconds from the first worker starting to the last one finishing.
pub fn run_workers<T: Send>(cfg: &BenchConfig, work: impl Fn(usize, &Control) -> T + Sync) -> (Vec<T>, f64) {
    let control = Control { stop: AtomicBool::new(false), limit: cfg.ops_per_thread };
    let barrier = Barrier::new(cfg.threads + 1);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (control, barrier, work) = (&control, &barrier, &work);
                let pin = cfg.pin;
                s.spawn(move || {
                    if pin {
                        pin_to_cpu(t);
                    }
                    barrier.wait();
                    let start = Instant::now();
                    let out = work(t, control);
                    (out, start, Instant::now())
                })
            })
            .collect();
        barrier.wait();
        if cfg.ops_per_thread.is_none() {
            std::thread::sleep(cfg.duration);
            control.stop.store(true, Ordering::Relaxed);
        }
        let joined: Vec<_> = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
        let first = joined.iter().map(|j| j.1).min().expect("at least one worker");
        let last = joined.iter().map(|j| j.2).max().expect("at least one worker");
        (joined.into_iter().map(|j| j.0).collect(), (last - first).as_secs_f64())
    })
}

#[cfg(target_os = "linux")]
fn pin_to_cpu(t: usize) {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(t % cpus, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_cpu(_: usize) {}

/// Spin for `n` iterations the optimizer cannot remove.
#[inline]
pub fn noop_work(n: u64) {
    for i in 0..n {
        std::hint::black_box(i);
    }
}
