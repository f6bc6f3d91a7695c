//! Criterion benchmarks for the volchem pipeline; see `benches/`.
