//! Criterion benchmarks for the lungsound pipeline live in `benches/`.
