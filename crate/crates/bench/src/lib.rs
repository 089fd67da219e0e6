//! Criterion benchmarks for probefl live under `benches/`.
