//! Benchmarks for the mangocnn kernels live under `benches/`.
