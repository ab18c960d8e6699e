//! Static memory planning for tensor-op inference graphs.
//!
//! The crate models an inference graph as a flat list of tensors and ops,
//! replays each op's memory-access pattern step by step, and derives from
//! that replay the number of bytes by which an op's primary input buffer may
//! safely overlap its output buffer. Three independent derivations of the
//! overlap bound are provided — an exact pairwise trace scan, a linear-time
//! reverse scan over the same loop nests, and a closed-form expression for
//! windowed kernels — and the planner cross-checks them against each other.
//!
//! On top of the overlap bounds sits an arena planner that packs buffers
//! into a single allocation, with and without input/output overlap, plus a
//! byte-accurate replay validator that proves a plan clobber-free.

pub mod error;
pub mod kernel_sim;
pub mod memory_planner;
pub mod model_graph;
pub mod model_zoo;
pub mod overlap_engine;
pub mod plan_validator;
pub mod render;

pub use error::{Error, Result};
pub use kernel_sim::{
    dump_trace_binary, dump_trace_csv, steps_total, trace_model, trace_op, trace_op_visit,
    ArenaEvent, BufferRole, EventKind, MemEvent, TraceSummary,
};
pub use memory_planner::{
    estimate_split, peak_report, plan_baseline, plan_dmo, AllocationPlan, OverlapRecord,
    PeakReport, PlanOptions, PlannedBuffer, SeedDirection, SplitEstimate,
};
pub use model_graph::{
    compute_scopes, derive_padding, graph_from_json, graph_to_json, load_graph, save_graph,
    serialise, validate_graph, DType, OpKind, OpNode, OpParams, Padding, ScopeTable, Strategy,
    TensorGraph, TensorKind, TensorSpec, Violation,
};
pub use model_zoo::{demo_graph, zoo_build, zoo_list, DemoKind, Family, ZooSpec};
pub use overlap_engine::{
    analyze_graph, cross_validate, os_algorithmic, os_analytic, os_from_trace,
    os_from_trace_streamed, GraphReport, OpOverlapReport, OsMethod, OverlapDetail, OverlapResult,
};
pub use plan_validator::{validate, ClobberRecord};
pub use render::{render_blocks, render_trace, trace_envelope, EnvelopeRow, RenderOptions};
