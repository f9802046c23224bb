//! CSV results: one row per run.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub const HEADER: &str = "benchmark,lock,threads,read_pct,run,ops,secs,throughput";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub benchmark: String,
    pub lock: String,
    pub threads: usize,
    pub read_pct: u32,
    pub run: u32,
    pub ops: u64,
    pub secs: f64,
    /// Operations per second over all threads.
    pub throughput: f64,
}

impl Record {
    fn key(&self) -> (&str, &str, usize, u32, u32) {
        (&self.benchmark, &self.lock, self.threads, self.read_pct, self.run)
    }
}

pub fn sort(records: &mut [Record]) {
    records.sort_by(|a, b| a.key().cmp(&b.key()));
}

pub fn write_csv<W: Write>(out: W, records: &[Record]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<Record>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub benchmark: String,
    pub lock: String,
    pub threads: usize,
    pub read_pct: u32,
    pub runs: usize,
    pub mean: f64,
    pub stddev: f64,
}

/// Mean and sample standard deviation of throughput per configuration.
pub fn summarize(records: &[Record]) -> Vec<Summary> {
    let mut sorted = records.to_vec();
    sort(&mut sorted);
    let mut out: Vec<Summary> = Vec::new();
    for group in sorted.chunk_by(same_config) {
        let n = group.len();
        let mean = group.iter().map(|r| r.throughput).sum::<f64>() / n as f64;
        let var = if n > 1 {
            group.iter().map(|r| (r.throughput - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let r = &group[0];
        out.push(Summary {
            benchmark: r.benchmark.clone(),
            lock: r.lock.clone(),
            threads: r.threads,
            read_pct: r.read_pct,
            runs: n,
            mean,
            stddev: var.sqrt(),
        });
    }
    out
}

fn same_config(a: &Record, b: &Record) -> bool {
    a.benchmark == b.benchmark && a.lock == b.lock && a.threads == b.threads && a.read_pct == b.read_pct
}
