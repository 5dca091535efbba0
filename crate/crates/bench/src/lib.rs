//! Benchmarks for the samplers live under `benches/`.
