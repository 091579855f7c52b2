//! Criterion benchmarks for the solver live in `benches/`.
