//! Criterion benchmarks for `normex-core`; see `benches/normex.rs`.
