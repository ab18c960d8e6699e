//! Arena planners: baseline non-overlapping allocation and the
//! diagonal-overlap optimiser, plus peak analysis and a spatial-split
//! estimator.
//!
//! Arena membership: every non-constant tensor — graph inputs and outputs
//! included — gets a buffer; constants live outside the arena.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_graph::{
    compute_scopes, serialise, window_geom, ScopeTable, Strategy, TensorGraph, TensorKind,
};
use crate::overlap_engine::{os_algorithmic, os_analytic, os_from_trace_streamed, OsMethod};

/// One tensor's placement in the arena.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedBuffer {
    pub tensor: String,
    pub offset: u64,
    pub size: u64,
}

/// A deliberately overlapped producer/consumer pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub op: String,
    pub input: String,
    pub output: String,
    /// Bytes shared between the input's head and the output's tail.
    pub overlap_bytes: u64,
}

/// A complete, replayable allocation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub model: String,
    /// `"baseline:<variant>:<order>"` or `"dmo:<variant>:<order>"`.
    pub strategy: String,
    /// Op ids in execution order.
    pub order: Vec<String>,
    pub arena_size: u64,
    pub buffers: Vec<PlannedBuffer>,
    pub overlaps: Vec<OverlapRecord>,
}

impl AllocationPlan {
    pub fn offset_of(&self, tensor: &str) -> Option<u64> {
        self.buffers
            .iter()
            .find(|b| b.tensor == tensor)
            .map(|b| b.offset)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialisation cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Where the seeded baseline allocator starts its placement wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedDirection {
    /// Seed at the first graph input.
    Forward,
    /// Seed at the first graph output.
    Backward,
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    /// Execution-order strategies to try.
    pub strategies: Vec<Strategy>,
    /// Seed directions for the baseline wave allocator (greedy-by-size is
    /// always tried as well).
    pub seeds: Vec<SeedDirection>,
    /// Which overlap computation the optimiser trusts.
    pub os_method: OsMethod,
    /// Let the best baseline plan compete as the zero-overlap candidate,
    /// guaranteeing the optimiser never regresses past it.
    pub include_baseline_candidate: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            strategies: vec![Strategy::Eager, Strategy::Lazy, Strategy::FileOrder],
            seeds: vec![SeedDirection::Forward, SeedDirection::Backward],
            os_method: OsMethod::Analytic,
            include_baseline_candidate: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Placement machinery
// ---------------------------------------------------------------------------

/// Lowest non-negative offset outside all (open) forbidden intervals.
fn lowest_fit(mut forbidden: Vec<(i128, i128)>) -> u64 {
    forbidden.sort_unstable();
    let mut cur: i128 = 0;
    for (lo, hi) in forbidden {
        if cur > lo && cur < hi {
            cur = hi;
        }
    }
    cur as u64
}

struct PlacementCtx<'a> {
    g: &'a TensorGraph,
    scopes: &'a ScopeTable,
    /// Tensor indices in the arena.
    arena: Vec<usize>,
    offsets: Vec<Option<u64>>,
}

impl<'a> PlacementCtx<'a> {
    fn new(g: &'a TensorGraph, scopes: &'a ScopeTable) -> Self {
        let arena = (0..g.tensors().len())
            .filter(|&ti| g.tensors()[ti].kind != TensorKind::Constant)
            .collect();
        PlacementCtx {
            g,
            scopes,
            arena,
            offsets: vec![None; g.tensors().len()],
        }
    }

    fn size(&self, ti: usize) -> u64 {
        self.g.tensors()[ti].size_bytes()
    }

    /// Strict lowest-fit against every placed, lifetime-conflicting buffer.
    fn strict_fit(&self, ti: usize) -> u64 {
        let size = self.size(ti) as i128;
        let mut forbidden = Vec::new();
        for &other in &self.arena {
            if other == ti {
                continue;
            }
            if let Some(off) = self.offsets[other] {
                if self.scopes.conflict(ti, other) {
                    let off = off as i128;
                    forbidden.push((off - size, off + self.size(other) as i128));
                }
            }
        }
        lowest_fit(forbidden)
    }

    fn place(&mut self, ti: usize, offset: u64) {
        self.offsets[ti] = Some(offset);
    }

    fn arena_size(&self) -> u64 {
        self.arena
            .iter()
            .filter_map(|&ti| self.offsets[ti].map(|off| off + self.size(ti)))
            .max()
            .unwrap_or(0)
    }

    fn buffers(&self) -> Vec<PlannedBuffer> {
        let mut out: Vec<PlannedBuffer> = self
            .arena
            .iter()
            .map(|&ti| PlannedBuffer {
                tensor: self.g.tensors()[ti].id.clone(),
                offset: self.offsets[ti].expect("all arena tensors placed"),
                size: self.size(ti),
            })
            .collect();
        out.sort_by(|a, b| a.offset.cmp(&b.offset).then_with(|| a.tensor.cmp(&b.tensor)));
        out
    }
}

// ---------------------------------------------------------------------------
// Baseline planner
// ---------------------------------------------------------------------------

fn seeded_placements<'a>(
    g: &'a TensorGraph,
    scopes: &'a ScopeTable,
    dir: SeedDirection,
) -> PlacementCtx<'a> {
    let mut ctx = PlacementCtx::new(g, scopes);
    if ctx.arena.is_empty() {
        return ctx;
    }
    let wanted = match dir {
        SeedDirection::Forward => TensorKind::Input,
        SeedDirection::Backward => TensorKind::Output,
    };
    let seed = ctx
        .arena
        .iter()
        .copied()
        .find(|&ti| g.tensors()[ti].kind == wanted)
        .unwrap_or(ctx.arena[0]);
    ctx.place(seed, 0);
    loop {
        let unplaced: Vec<usize> = ctx
            .arena
            .iter()
            .copied()
            .filter(|&ti| ctx.offsets[ti].is_none())
            .collect();
        if unplaced.is_empty() {
            break;
        }
        // Prefer tensors whose lifetime touches something already placed;
        // they are the ones a bad offset can hurt.
        let mut candidates: Vec<usize> = unplaced
            .iter()
            .copied()
            .filter(|&ti| {
                ctx.arena.iter().any(|&other| {
                    ctx.offsets[other].is_some() && scopes.conflict(ti, other)
                })
            })
            .collect();
        if candidates.is_empty() {
            candidates = unplaced;
        }
        let pick = candidates
            .into_iter()
            .map(|ti| (ctx.strict_fit(ti), scopes.first_use[ti], ti))
            .min()
            .expect("candidate set is non-empty");
        ctx.place(pick.2, pick.0);
    }
    ctx
}

fn greedy_by_size_placements<'a>(g: &'a TensorGraph, scopes: &'a ScopeTable) -> PlacementCtx<'a> {
    let mut ctx = PlacementCtx::new(g, scopes);
    let mut order: Vec<usize> = ctx.arena.clone();
    order.sort_by(|&a, &b| {
        ctx.size(b)
            .cmp(&ctx.size(a))
            .then_with(|| scopes.first_use[a].cmp(&scopes.first_use[b]))
            .then_with(|| a.cmp(&b))
    });
    for ti in order {
        let fit = ctx.strict_fit(ti);
        ctx.place(ti, fit);
    }
    ctx
}

fn order_ids(g: &TensorGraph, order: &[usize]) -> Vec<String> {
    order.iter().map(|&oi| g.ops[oi].id.clone()).collect()
}

/// Best non-overlapping plan over the requested order strategies and
/// allocator variants.
pub fn plan_baseline(g: &TensorGraph, opts: &PlanOptions) -> Result<AllocationPlan> {
    let mut best: Option<AllocationPlan> = None;
    let mut first_err: Option<Error> = None;
    for &strategy in &opts.strategies {
        let order = match serialise(g, strategy) {
            Ok(o) => o,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let scopes = compute_scopes(g, &order)?;
        let mut variants: Vec<(String, PlacementCtx)> = Vec::new();
        for &dir in &opts.seeds {
            let name = match dir {
                SeedDirection::Forward => "forward",
                SeedDirection::Backward => "backward",
            };
            variants.push((name.to_string(), seeded_placements(g, &scopes, dir)));
        }
        variants.push((
            "greedy-by-size".to_string(),
            greedy_by_size_placements(g, &scopes),
        ));
        for (name, ctx) in variants {
            let arena = ctx.arena_size();
            if best.as_ref().is_none_or(|b| arena < b.arena_size) {
                best = Some(AllocationPlan {
                    model: g.name.clone(),
                    strategy: format!("baseline:{name}:{strategy}"),
                    order: order_ids(g, &order),
                    arena_size: arena,
                    buffers: ctx.buffers(),
                    overlaps: Vec::new(),
                });
            }
        }
    }
    match best {
        Some(plan) => Ok(plan),
        None => Err(first_err
            .unwrap_or_else(|| Error::Plan("no ordering strategy produced a plan".into()))),
    }
}

// ---------------------------------------------------------------------------
// Diagonal-overlap planner
// ---------------------------------------------------------------------------

fn os_for_planning(g: &TensorGraph, op_idx: usize, method: OsMethod) -> u64 {
    let r = match method {
        OsMethod::Analytic => os_analytic(g, op_idx),
        OsMethod::Algorithmic => os_algorithmic(g, op_idx),
        OsMethod::Trace => os_from_trace_streamed(g, op_idx),
    };
    // An op without a registered nest simply contributes no overlap.
    r.map(|r| r.o_s).unwrap_or(0)
}

struct PairInfo {
    /// Safe overlap per op (bytes), by op index.
    o_s: Vec<u64>,
    eligible: Vec<bool>,
    /// Eligible op by its input0 tensor index (unique: eligibility demands a
    /// single consumer).
    by_in0: BTreeMap<usize, usize>,
}

fn pair_info(g: &TensorGraph, scopes: &ScopeTable, method: OsMethod) -> PairInfo {
    let n = g.ops.len();
    let mut o_s = vec![0u64; n];
    let mut eligible = vec![false; n];
    let mut by_in0 = BTreeMap::new();
    for (i, op) in g.ops.iter().enumerate() {
        let Some(in0_id) = op.inputs.first() else { continue };
        let in0 = g.tensor_index(in0_id).unwrap();
        let spec = &g.tensors()[in0];
        if spec.kind == TensorKind::Constant || spec.kind == TensorKind::Output {
            continue;
        }
        if scopes.consumer_count[in0] != 1 {
            continue;
        }
        o_s[i] = os_for_planning(g, i, method);
        if o_s[i] > 0 {
            eligible[i] = true;
            by_in0.insert(in0, i);
        }
    }
    PairInfo {
        o_s,
        eligible,
        by_in0,
    }
}

/// Relaxed lowest-fit: strict intervals, except that an eligible pair's
/// buffers may close up to within `OB_s - O_s` of each other.
fn relaxed_fit(ctx: &PlacementCtx, info: &PairInfo, x: usize) -> u64 {
    let g = ctx.g;
    let size_x = ctx.size(x) as i128;
    let mut forbidden = Vec::new();
    for &y in &ctx.arena {
        if y == x {
            continue;
        }
        let Some(off_y) = ctx.offsets[y] else { continue };
        if !ctx.scopes.conflict(x, y) {
            continue;
        }
        let off_y = off_y as i128;
        let end_y = off_y + ctx.size(y) as i128;
        // Which relation, if any, ties x to y through an eligible op?
        let x_is_in0_of = info
            .by_in0
            .get(&x)
            .copied()
            .filter(|&e| g.tensor_index(&g.ops[e].output) == Some(y));
        let y_is_in0_of = info
            .by_in0
            .get(&y)
            .copied()
            .filter(|&e| g.tensor_index(&g.ops[e].output) == Some(x));
        let interval = if let Some(e) = x_is_in0_of {
            // x may start inside y's tail, up to O_s bytes deep.
            let ob = ctx.size(g.tensor_index(&g.ops[e].output).unwrap()) as i128;
            (off_y - size_x, off_y + ob - info.o_s[e] as i128)
        } else if let Some(e) = y_is_in0_of {
            // x is the output; it may reach under its input0.
            let ob = ctx.size(x) as i128;
            (off_y - (ob - info.o_s[e] as i128), end_y)
        } else {
            (off_y - size_x, end_y)
        };
        forbidden.push(interval);
    }
    lowest_fit(forbidden)
}

/// Run one overlap-aware placement walk over `seq` (op indices).
fn dmo_walk<'a>(
    g: &'a TensorGraph,
    scopes: &'a ScopeTable,
    info: &PairInfo,
    seq: &[usize],
) -> PlacementCtx<'a> {
    let mut ctx = PlacementCtx::new(g, scopes);
    let place_if_needed = |ctx: &mut PlacementCtx<'a>, ti: usize| {
        if ctx.offsets[ti].is_none() && g.tensors()[ti].kind != TensorKind::Constant {
            let fit = relaxed_fit(ctx, info, ti);
            ctx.place(ti, fit);
        }
    };
    for &oi in seq {
        let op = &g.ops[oi];
        let out = g.tensor_index(&op.output).unwrap();
        place_if_needed(&mut ctx, out);
        for (slot, input) in op.inputs.iter().enumerate() {
            let ti = g.tensor_index(input).unwrap();
            // input0 first (it owns the relaxation), then the rest.
            let _ = slot;
            place_if_needed(&mut ctx, ti);
        }
    }
    // Anything untouched by the walk (dead tensors) still needs a home.
    for ti in ctx.arena.clone() {
        place_if_needed(&mut ctx, ti);
    }
    ctx
}

fn overlap_records(g: &TensorGraph, info: &PairInfo, ctx: &PlacementCtx) -> Vec<OverlapRecord> {
    let mut out = Vec::new();
    for (i, op) in g.ops.iter().enumerate() {
        if !info.eligible[i] {
            continue;
        }
        let in0 = g.tensor_index(&op.inputs[0]).unwrap();
        let out_t = g.tensor_index(&op.output).unwrap();
        let (Some(in_off), Some(out_off)) = (ctx.offsets[in0], ctx.offsets[out_t]) else {
            continue;
        };
        let out_end = out_off + ctx.size(out_t);
        let intersects = in_off < out_end && in_off + ctx.size(in0) > out_off;
        if intersects {
            out.push(OverlapRecord {
                op: op.id.clone(),
                input: op.inputs[0].clone(),
                output: op.output.clone(),
                overlap_bytes: out_end - in_off,
            });
        }
    }
    out
}

/// Overlap-aware plan: pair-extent-first and reverse-execution walks over
/// every requested order, with the best baseline as the zero-overlap
/// fallback candidate.
pub fn plan_dmo(g: &TensorGraph, opts: &PlanOptions) -> Result<AllocationPlan> {
    let mut best: Option<AllocationPlan> = None;
    let mut first_err: Option<Error> = None;
    for &strategy in &opts.strategies {
        let order = match serialise(g, strategy) {
            Ok(o) => o,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let scopes = compute_scopes(g, &order)?;
        let info = pair_info(g, &scopes, opts.os_method);

        // Walk 1: widest producer/consumer extent first. An eligible pair
        // occupies max(OB, OB - O_s + IB) bytes; an ineligible op the plain
        // sum of its live buffers.
        let mut by_extent: Vec<usize> = (0..g.ops.len()).collect();
        let extent = |oi: usize| -> u64 {
            let op = &g.ops[oi];
            let ob = g.tensor(&op.output).unwrap().size_bytes();
            let ib = op
                .inputs
                .first()
                .map(|id| g.tensor(id).unwrap())
                .filter(|t| t.kind != TensorKind::Constant)
                .map_or(0, |t| t.size_bytes());
            if info.eligible[oi] {
                ob.max(ob - info.o_s[oi] + ib)
            } else {
                ob + ib
            }
        };
        by_extent.sort_by(|&a, &b| extent(b).cmp(&extent(a)).then_with(|| a.cmp(&b)));

        // Walk 2: reverse execution order.
        let reversed: Vec<usize> = order.iter().rev().copied().collect();

        for (variant, seq) in [("pair-extent", &by_extent), ("reverse-walk", &reversed)] {
            let ctx = dmo_walk(g, &scopes, &info, seq);
            let arena = ctx.arena_size();
            if best.as_ref().is_none_or(|b| arena < b.arena_size) {
                best = Some(AllocationPlan {
                    model: g.name.clone(),
                    strategy: format!("dmo:{variant}:{strategy}"),
                    order: order_ids(g, &order),
                    arena_size: arena,
                    buffers: ctx.buffers(),
                    overlaps: overlap_records(g, &info, &ctx),
                });
            }
        }
    }
    if opts.include_baseline_candidate {
        if let Ok(base) = plan_baseline(g, opts) {
            if best.as_ref().is_none_or(|b| base.arena_size < b.arena_size) {
                best = Some(base);
            }
        }
    }
    match best {
        Some(plan) => Ok(plan),
        None => Err(first_err
            .unwrap_or_else(|| Error::Plan("no ordering strategy produced a plan".into()))),
    }
}

// ---------------------------------------------------------------------------
// Peak analysis
// ---------------------------------------------------------------------------

/// Live-set summary at the execution position with the largest footprint.
#[derive(Debug, Clone, Serialize)]
pub struct PeakReport {
    pub arena_size: u64,
    /// Op id at the peak position.
    pub peak_op: String,
    /// Buffers live at the peak, in tensor declaration order.
    pub live: Vec<PlannedBuffer>,
}

pub fn peak_report(g: &TensorGraph, plan: &AllocationPlan) -> Result<PeakReport> {
    let order: Vec<usize> = plan
        .order
        .iter()
        .map(|id| g.op_index(id).ok_or_else(|| Error::UnknownOp(id.clone())))
        .collect::<Result<_>>()?;
    let scopes = compute_scopes(g, &order)?;
    let arena: Vec<usize> = (0..g.tensors().len())
        .filter(|&ti| g.tensors()[ti].kind != TensorKind::Constant)
        .collect();
    let mut peak_pos = 0usize;
    let mut peak_sum = 0u64;
    for pos in 0..order.len() {
        let p = pos as i64;
        let sum: u64 = arena
            .iter()
            .filter(|&&ti| scopes.first_use[ti] <= p && p <= scopes.last_use[ti])
            .map(|&ti| g.tensors()[ti].size_bytes())
            .sum();
        if sum > peak_sum {
            peak_sum = sum;
            peak_pos = pos;
        }
    }
    let p = peak_pos as i64;
    let mut live = Vec::new();
    for &ti in &arena {
        if scopes.first_use[ti] <= p && p <= scopes.last_use[ti] {
            let id = &g.tensors()[ti].id;
            let buffer = plan
                .buffers
                .iter()
                .find(|b| &b.tensor == id)
                .ok_or_else(|| {
                    Error::Structural(format!("tensor `{id}` has no buffer in the plan"))
                })?;
            live.push(buffer.clone());
        }
    }
    let peak_op = plan
        .order
        .get(peak_pos)
        .cloned()
        .ok_or_else(|| Error::Plan("plan has an empty order".into()))?;
    Ok(PeakReport {
        arena_size: plan.arena_size,
        peak_op,
        live,
    })
}

// ---------------------------------------------------------------------------
// Spatial split estimation
// ---------------------------------------------------------------------------

/// Cost/benefit estimate for tiling a windowed producer/consumer pair.
#[derive(Debug, Clone, Serialize)]
pub struct SplitEstimate {
    /// Number of tiles.
    pub split_factor: u64,
    /// Largest tile of the intermediate tensor, in bytes.
    pub tile_intermediate_bytes: u64,
    /// Peak footprint with the split applied: producer input + largest tile
    /// + consumer output.
    pub peak_bytes: u64,
    /// Same footprint without splitting.
    pub unsplit_peak_bytes: u64,
    /// Extra elements of the intermediate recomputed across tile halos.
    pub recomputed_elements: u64,
    pub full_intermediate_bytes: u64,
}

/// Tile the intermediate between two directly chained windowed ops into a
/// `tiles.0 x tiles.1` grid of output tiles of `op_b` and report the
/// memory/recompute trade.
pub fn estimate_split(
    g: &TensorGraph,
    op_a: usize,
    op_b: usize,
    tiles: (u64, u64),
) -> Result<SplitEstimate> {
    let (rows_t, cols_t) = tiles;
    let a = g
        .ops
        .get(op_a)
        .ok_or_else(|| Error::Plan(format!("no op at index {op_a}")))?;
    let b = g
        .ops
        .get(op_b)
        .ok_or_else(|| Error::Plan(format!("no op at index {op_b}")))?;
    if !a.kind.is_windowed() || !b.kind.is_windowed() {
        return Err(Error::Plan(format!(
            "split requires windowed ops; `{}` and `{}` given",
            a.id, b.id
        )));
    }
    if b.inputs.first() != Some(&a.output) {
        return Err(Error::Plan(format!(
            "`{}` does not consume the output of `{}`",
            b.id, a.id
        )));
    }
    let geom = window_geom(g, op_b)?;
    if rows_t == 0 || cols_t == 0 || geom.oh % rows_t != 0 || geom.ow % cols_t != 0 {
        return Err(Error::Plan(format!(
            "tile grid {rows_t}x{cols_t} does not divide the {}x{} output of `{}`",
            geom.oh, geom.ow, b.id
        )));
    }

    // Receptive extent of one tile along one axis, back-propagated through
    // the consumer's window.
    let extent = |t: u64, tile_out: u64, i: u64, k: u64, s: u64, d: u64, p: u64| -> u64 {
        let lo = (t * tile_out * s) as i64 - p as i64;
        let hi = ((t + 1) * tile_out - 1) as i64 * s as i64 - p as i64 + ((k - 1) * d) as i64;
        let lo = lo.max(0) as u64;
        let hi = (hi.max(0) as u64).min(i - 1);
        hi - lo + 1
    };
    let tile_oh = geom.oh / rows_t;
    let tile_ow = geom.ow / cols_t;
    let mut sum_rows = 0u64;
    let mut max_rows = 0u64;
    for t in 0..rows_t {
        let rows = extent(t, tile_oh, geom.ih, geom.kh, geom.sh, geom.dh, geom.ph);
        sum_rows += rows;
        max_rows = max_rows.max(rows);
    }
    let mut sum_cols = 0u64;
    let mut max_cols = 0u64;
    for t in 0..cols_t {
        let cols = extent(t, tile_ow, geom.iw, geom.kw, geom.sw, geom.dw, geom.pw);
        sum_cols += cols;
        max_cols = max_cols.max(cols);
    }

    let intermediate = g.tensor(&a.output).unwrap();
    let a_input = g.tensor(&a.inputs[0]).unwrap();
    let b_output = g.tensor(&b.output).unwrap();
    let ts = intermediate.dtype.size_bytes();

    let tile_intermediate_bytes = max_rows * max_cols * geom.id * ts;
    let full_intermediate_bytes = intermediate.size_bytes();
    let peak_bytes = a_input.size_bytes() + tile_intermediate_bytes + b_output.size_bytes();
    let unsplit_peak_bytes =
        a_input.size_bytes() + full_intermediate_bytes + b_output.size_bytes();
    let recomputed_elements = (sum_rows * sum_cols).saturating_sub(geom.ih * geom.iw) * geom.id;

    Ok(SplitEstimate {
        split_factor: rows_t * cols_t,
        tile_intermediate_bytes,
        peak_bytes,
        unsplit_peak_bytes,
        recomputed_elements,
        full_intermediate_bytes,
    })
}
