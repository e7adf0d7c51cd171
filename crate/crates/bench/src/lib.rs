//! Criterion benchmarks for rvr-core live in `benches/`.
