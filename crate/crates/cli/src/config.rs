use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Benchmark {
    ArrbenchFull,
    ArrbenchDisjoint,
    ArrbenchRandom,
    Skiplist,
    VmaArena,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::ArrbenchFull,
        Benchmark::ArrbenchDisjoint,
        Benchmark::ArrbenchRandom,
        Benchmark::Skiplist,
        Benchmark::VmaArena,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::ArrbenchFull => "arrbench-full",
            Benchmark::ArrbenchDisjoint => "arrbench-disjoint",
            Benchmark::ArrbenchRandom => "arrbench-random",
            Benchmark::Skiplist => "skiplist",
            Benchmark::VmaArena => "vma-arena",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockImpl {
    ListEx,
    ListRw,
    LustreEx,
    KernelRw,
    PnovaRw,
    /// Per-node locks; only meaningful for the skip list.
    Orig,
}

impl LockImpl {
    pub const ALL: [LockImpl; 6] = [
        LockImpl::ListEx,
        LockImpl::ListRw,
        LockImpl::LustreEx,
        LockImpl::KernelRw,
        LockImpl::PnovaRw,
        LockImpl::Orig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LockImpl::ListEx => "list-ex",
            LockImpl::ListRw => "list-rw",
            LockImpl::LustreEx => "lustre-ex",
            LockImpl::KernelRw => "kernel-rw",
            LockImpl::PnovaRw => "pnova-rw",
            LockImpl::Orig => "orig",
        }
    }
}

macro_rules! named {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = ConfigError;

            fn from_str(s: &str) -> Result<Self, ConfigError> {
                <$t>::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| ConfigError::Unknown { what: stringify!($t), value: s.to_string() })
            }
        }
    };
}

named!(Benchmark);
named!(LockImpl);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
    #[error("read percentage {0} is above 100")]
    ReadPct(u32),
    #[error("update percentage {0} is above 100")]
    UpdatePct(u32),
    #[error("thread count must be positive")]
    NoThreads,
    #[error("need at least 2 slots, got {0}")]
    TooFewSlots(u64),
    #[error("{threads} threads cannot split {slots} slots")]
    SlotsPerThread { threads: usize, slots: u64 },
    #[error("cache line of {0} bytes is not a positive multiple of 8")]
    CacheLine(usize),
    #[error("run count must be positive")]
    NoRuns,
    #[error("{lock} does not support {benchmark}")]
    Unsupported { lock: LockImpl, benchmark: Benchmark },
    #[error("key range must be at least 2, got {0}")]
    KeyRange(u64),
    #[error("arena needs at least 4 pages, got {0}")]
    ArenaPages(u64),
}

/// Everything one measurement needs.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub benchmark: Benchmark,
    pub lock: LockImpl,
    pub threads: usize,
    pub read_pct: u32,
    pub duration: Duration,
    /// Run a fixed number of operations per thread instead of a timed loop.
    pub ops_per_thread: Option<u64>,
    pub runs: u32,
    pub slots: u64,
    pub noop_max: u64,
    pub cache_line: usize,
    pub seed: u64,
    /// Wrap list locks in a fairness gate with this patience.
    pub patience: Option<u32>,
    pub pin: bool,
    pub key_range: u64,
    pub update_pct: u32,
    pub arena_pages: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            benchmark: Benchmark::ArrbenchFull,
            lock: LockImpl::ListRw,
            threads: 1,
            read_pct: 100,
            duration: Duration::from_secs(3),
            ops_per_thread: None,
            runs: 5,
            slots: 256,
            noop_max: 2048,
            cache_line: 64,
            seed: 1,
            patience: None,
            pin: false,
            key_range: 1 << 17,
            update_pct: 20,
            arena_pages: 256,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.read_pct > 100 {
            return Err(ConfigError::ReadPct(self.read_pct));
        }
        if self.update_pct > 100 {
            return Err(ConfigError::UpdatePct(self.update_pct));
        }
        if self.threads == 0 {
            return Err(ConfigError::NoThreads);
        }
        if self.runs == 0 {
            return Err(ConfigError::NoRuns);
        }
        if self.cache_line == 0 || !self.cache_line.is_multiple_of(8) {
            return Err(ConfigError::CacheLine(self.cache_line));
        }
        let unsupported = Err(ConfigError::Unsupported { lock: self.lock, benchmark: self.benchmark });
        match self.benchmark {
            Benchmark::ArrbenchFull | Benchmark::ArrbenchDisjoint | Benchmark::ArrbenchRandom => {
                if self.slots < 2 {
                    return Err(ConfigError::TooFewSlots(self.slots));
                }
                if self.benchmark == Benchmark::ArrbenchDisjoint && (self.threads as u64) > self.slots {
                    return Err(ConfigError::SlotsPerThread { threads: self.threads, slots: self.slots });
                }
                if self.lock == LockImpl::Orig {
                    return unsupported;
                }
            }
            Benchmark::Skiplist => {
                if self.key_range < 2 {
                    return Err(ConfigError::KeyRange(self.key_range));
                }
            }
            Benchmark::VmaArena => {
                if self.lock != LockImpl::ListRw {
                    return unsupported;
                }
                if self.arena_pages < 4 {
                    return Err(ConfigError::ArenaPages(self.arena_pages));
                }
            }
        }
        Ok(())
    }
}
