//! Criterion benchmarks for the rangelock crate live under `benches/`.
