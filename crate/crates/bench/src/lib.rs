//! Criterion benchmarks for the reconstruction pipeline live in `benches/`.
