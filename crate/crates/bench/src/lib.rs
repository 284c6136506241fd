//! Benchmark-only crate; see `benches/acquisition.rs`.
