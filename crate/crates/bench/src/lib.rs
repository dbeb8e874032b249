//! Criterion benchmarks for the qsmooth pipeline; see `benches/`.
