use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use rangelock_cli::report::{self, Record};
use rangelock_cli::{run_once, BenchConfig, Benchmark, LockImpl};

const DESK_THREADS: [usize; 5] = [1, 2, 4, 8, 16];
const FULL_SCALE_THREADS: [usize; 8] = [1, 2, 4, 8, 16, 40, 72, 144];

/// Range-lock benchmark harness. Every combination of benchmark, lock and
/// thread count is run `--runs` times; one CSV row is written per run.
#[derive(Parser, Debug)]
#[command(name = "rangelock-bench", version)]
struct Args {
    /// arrbench-full, arrbench-disjoint, arrbench-random, skiplist or vma-arena.
    #[arg(short, long, value_delimiter = ',', default_value = "arrbench-full")]
    benchmark: Vec<Benchmark>,
    /// list-ex, list-rw, lustre-ex, kernel-rw, pnova-rw; orig for skiplist only.
    #[arg(short, long, value_delimiter = ',', default_value = "list-rw")]
    lock: Vec<LockImpl>,
    /// Thread counts; defaults to 1,2,4,8,16 (more with --full-scale).
    #[arg(short, long, value_delimiter = ',')]
    threads: Vec<usize>,
    /// Share of read operations; for vma-arena the share of page faults.
    #[arg(long, default_value_t = 100)]
    read_pct: u32,
    /// Seconds per run.
    #[arg(short, long)]
    duration: Option<f64>,
    #[arg(short, long, default_value_t = 5)]
    runs: u32,
    /// Fixed operation count per thread instead of a timed run.
    #[arg(long)]
    ops: Option<u64>,
    #[arg(long, default_value_t = 256)]
    slots: u64,
    /// Upper bound of the random no-op loop between operations.
    #[arg(long, default_value_t = 2048)]
    noop_max: u64,
    /// Slot padding in bytes.
    #[arg(long, default_value_t = 64)]
    cache_line: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Failed attempts before a list-lock acquirer escalates to the fairness gate.
    #[arg(long, env = "RANGELOCK_PATIENCE")]
    patience: Option<u32>,
    /// Larger thread counts, 10 s runs and an 8M key range.
    #[arg(long)]
    full_scale: bool,
    /// Pin worker i to CPU i mod ncpus.
    #[arg(long)]
    pin: bool,
    #[arg(long)]
    key_range: Option<u64>,
    /// Share of skip-list updates, split evenly between inserts and removes.
    #[arg(long, default_value_t = 20)]
    update_pct: u32,
    #[arg(long, default_value_t = 256)]
    arena_pages: u64,
    /// CSV destination; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl Args {
    fn configs(&self) -> Vec<BenchConfig> {
        let threads = match (&self.threads[..], self.full_scale) {
            ([], false) => DESK_THREADS.to_vec(),
            ([], true) => FULL_SCALE_THREADS.to_vec(),
            (t, _) => t.to_vec(),
        };
        let d = BenchConfig::default();
        let duration = self.duration.map(Duration::from_secs_f64).unwrap_or(if self.full_scale {
            Duration::from_secs(10)
        } else {
            d.duration
        });
        let key_range = self.key_range.unwrap_or(if self.full_scale { 1 << 23 } else { d.key_range });
        let mut out = Vec::new();
        for &benchmark in &self.benchmark {
            for &lock in &self.lock {
                for &threads in &threads {
                    out.push(BenchConfig {
                        benchmark,
                        lock,
                        threads,
                        read_pct: self.read_pct,
                        duration,
                        ops_per_thread: self.ops,
                        runs: self.runs,
                        slots: self.slots,
                        noop_max: self.noop_max,
                        cache_line: self.cache_line,
                        seed: self.seed,
                        patience: self.patience,
                        pin: self.pin,
                        key_range,
                        update_pct: self.update_pct,
                        arena_pages: self.arena_pages,
                    });
                }
            }
        }
        out
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let configs = args.configs();
    for c in &configs {
        if let Err(e) = c.validate() {
            eprintln!("error: {} / {} / {} threads: {e}", c.benchmark, c.lock, c.threads);
            return ExitCode::from(1);
        }
    }
    let mut records = Vec::new();
    let mut violated = false;
    for cfg in &configs {
        for run in 0..cfg.runs {
            let r = run_once(cfg, run).expect("validated");
            for v in &r.violations {
                eprintln!("VIOLATION {} {} t={} run={run}: {v}", cfg.benchmark, cfg.lock, cfg.threads);
            }
            violated |= !r.violations.is_empty();
            let extra: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!(
                "{} {} t={} run={run}: {:.0} ops/s {}",
                cfg.benchmark,
                cfg.lock,
                cfg.threads,
                r.throughput(),
                extra.join(" ")
            );
            records.push(Record {
                benchmark: cfg.benchmark.to_string(),
                lock: cfg.lock.to_string(),
                threads: cfg.threads,
                read_pct: cfg.read_pct,
                run,
                ops: r.ops(),
                secs: r.secs,
                throughput: r.throughput(),
            });
        }
    }
    report::sort(&mut records);
    let written = match &args.output {
        Some(p) => File::create(p)
            .map_err(csv::Error::from)
            .and_then(|f| report::write_csv(BufWriter::new(f), &records)),
        None => report::write_csv(io::stdout().lock(), &records),
    };
    if let Err(e) = written {
        eprintln!("error: writing results: {e}");
        return ExitCode::from(1);
    }
    for s in report::summarize(&records) {
        eprintln!(
            "summary {} {} t={} read={}%: mean {:.0} ops/s, sd {:.0} over {} runs",
            s.benchmark, s.lock, s.threads, s.read_pct, s.mean, s.stddev, s.runs
        );
    }
    if violated {
        eprintln!("invariant violations detected");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
