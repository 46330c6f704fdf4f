//! Criterion benchmarks for `descest`; see `benches/estimators.rs`.
