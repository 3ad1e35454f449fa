//! Criterion benchmarks for the simulation and pricing hot paths live in `benches/`.
