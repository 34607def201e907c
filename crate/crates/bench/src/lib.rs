//! Microbenchmark harness crate; see `benches/kernels.rs`.
