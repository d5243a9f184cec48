//! Criterion benchmarks for the `crmvip` solvers live in `benches/`.
