//! Criterion benchmarks for the scenelayout pipeline.
