//! Criterion harness crate; see `benches/planner.rs`.
