//! Criterion benchmarks for distance precomputation, cull passes and whole
//! campaigns. Run with `cargo bench -p fishsched-bench`.
