//! Criterion benchmarks for the sidelink simulator live under `benches/`.
