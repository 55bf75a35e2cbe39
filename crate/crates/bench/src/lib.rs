//! Criterion benchmarks for search, scoring and encoding; see `benches/`.
