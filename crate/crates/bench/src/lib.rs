//! Criterion benchmarks for the pipeline's hot paths live in `benches/`;
//! this crate intentionally exports nothing.
