//! Safe input/output overlap computation.
//!
//! `O_s` is the number of bytes by which an op's first input buffer may
//! overlap the tail of its output buffer without any store landing on an
//! input byte that is still to be read. Three independent routes compute it:
//!
//! * **trace** — replay the op's access trace and take the exact pairwise
//!   bound over every (write, later read) pair;
//! * **algorithmic** — a reverse scan over the op's registered loop nest,
//!   carrying a running minimum of read offsets;
//! * **analytic** — a closed form over the window geometry, evaluated in
//!   exact rational arithmetic.
//!
//! The first two agree bit-for-bit on every dense kernel with in-order
//! writes; the analytic form is a lower bound (within one stride row of
//! exact in practice).

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel_sim::{trace_op_visit, BufferRole, EventKind, MemEvent, TraceSummary};
use crate::model_graph::{window_geom, OpKind, TensorGraph, TensorKind, WindowGeom};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OsMethod {
    Trace,
    Algorithmic,
    Analytic,
}

impl FromStr for OsMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(OsMethod::Trace),
            "algorithmic" => Ok(OsMethod::Algorithmic),
            "analytic" => Ok(OsMethod::Analytic),
            other => Err(Error::Parse(format!("unknown overlap method `{other}`"))),
        }
    }
}

/// Intermediate quantities of the closed form, for windowed ops.
///
/// `a_num / a_den` is the input-vs-output advance ratio per step, `b` the
/// element offset of the first read relative to the write at step 0, and
/// `min_d` the minimum element displacement over the whole sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OverlapDetail {
    pub a_num: i64,
    pub a_den: i64,
    pub b: i64,
    pub min_d: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapResult {
    pub o_s: u64,
    pub method: OsMethod,
    pub detail: Option<OverlapDetail>,
}

fn result(o_s: u64, method: OsMethod) -> OverlapResult {
    OverlapResult {
        o_s,
        method,
        detail: None,
    }
}

// ---------------------------------------------------------------------------
// Trace method
// ---------------------------------------------------------------------------

/// Per-step load/write extrema, the sufficient statistic for the pair bound.
struct StepExtrema {
    /// Minimum input0 load offset per step (`u64::MAX` if none).
    min_load: Vec<u64>,
    /// Output write offset per step (`u64::MAX` if none).
    write: Vec<u64>,
    saw_input0_load: bool,
    saw_input1: bool,
}

impl StepExtrema {
    fn new(steps: usize) -> Self {
        StepExtrema {
            min_load: vec![u64::MAX; steps],
            write: vec![u64::MAX; steps],
            saw_input0_load: false,
            saw_input1: false,
        }
    }

    fn absorb(&mut self, e: &MemEvent) {
        match (e.buffer, e.kind) {
            (BufferRole::Input0, EventKind::Load) => {
                self.saw_input0_load = true;
                let slot = &mut self.min_load[e.step as usize];
                *slot = (*slot).min(e.offset);
            }
            (BufferRole::Input1, _) => self.saw_input1 = true,
            (BufferRole::Output, EventKind::Store | EventKind::Update) => {
                let slot = &mut self.write[e.step as usize];
                *slot = if *slot == u64::MAX {
                    e.offset
                } else {
                    (*slot).max(e.offset)
                };
            }
            _ => {}
        }
    }

    /// Exact pair bound: the largest intrusion `p` of any write past a load
    /// that happens strictly later, measured against the output tail.
    fn pair_bound(&self, ob_s: u64, t_s: u64) -> u64 {
        if self.saw_input1 || !self.saw_input0_load {
            // A second live operand (or no traced first operand at all)
            // leaves nothing to reason about — be conservative.
            return 0;
        }
        let steps = self.min_load.len();
        let mut min_after = u64::MAX;
        let mut p_min: i128 = 0;
        for s in (0..steps).rev() {
            if self.write[s] != u64::MAX && min_after != u64::MAX {
                let p = self.write[s] as i128 - min_after as i128 + t_s as i128;
                p_min = p_min.max(p);
            }
            if self.min_load[s] != u64::MAX {
                min_after = min_after.min(self.min_load[s]);
            }
        }
        let o_s = ob_s as i128 - p_min;
        o_s.clamp(0, ob_s as i128) as u64
    }
}

/// Exact `O_s` from a materialised trace. `ob_s` is the output buffer size
/// and `t_s` the element size, both in bytes.
pub fn os_from_trace(trace: &TraceSummary, ob_s: u64, t_s: u64) -> OverlapResult {
    let mut ext = StepExtrema::new(trace.steps_total as usize);
    for e in &trace.events {
        ext.absorb(e);
    }
    result(ext.pair_bound(ob_s, t_s), OsMethod::Trace)
}

/// Exact `O_s` for op `op_idx`, streaming the trace instead of storing it.
pub fn os_from_trace_streamed(g: &TensorGraph, op_idx: usize) -> Result<OverlapResult> {
    let op = &g.ops[op_idx];
    let in0 = op
        .inputs
        .first()
        .and_then(|id| g.tensor(id))
        .ok_or_else(|| Error::op(&op.id, "has no inputs"))?;
    if in0.kind == TensorKind::Constant {
        return Ok(result(0, OsMethod::Trace));
    }
    let out = g.tensor(&op.output).unwrap();
    let steps = crate::kernel_sim::steps_total(g, op_idx)?;
    let mut ext = StepExtrema::new(steps as usize);
    trace_op_visit(g, op_idx, &mut |e: &MemEvent| ext.absorb(e))?;
    Ok(result(
        ext.pair_bound(out.size_bytes(), out.dtype.size_bytes()),
        OsMethod::Trace,
    ))
}

// ---------------------------------------------------------------------------
// Algorithmic method
// ---------------------------------------------------------------------------

/// `O_s` by reverse scan over the op's registered loop nest.
///
/// Walks the steps backwards carrying the minimum input read offset seen at
/// or after each step and tracks the smallest read-minus-write displacement.
/// Registered nests: the four windowed kinds, elementwise, reshape and
/// fully-connected (whose accumulator sweep pins `O_s` to zero). Softmax and
/// concat have no registered nest and return an error.
pub fn os_algorithmic(g: &TensorGraph, op_idx: usize) -> Result<OverlapResult> {
    let op = &g.ops[op_idx];
    match op.kind {
        OpKind::Softmax | OpKind::Concat => {
            return Err(Error::op(&op.id, "no registered loop nest for this op kind"))
        }
        OpKind::FullyConnected => {
            // The top-down accumulator sweep rereads the whole input after
            // the highest output element is first written.
            return Ok(result(0, OsMethod::Algorithmic));
        }
        _ => {}
    }
    let in0 = g.tensor(&op.inputs[0]).unwrap();
    if in0.kind == TensorKind::Constant {
        return Ok(result(0, OsMethod::Algorithmic));
    }
    let second_live = op.inputs[1..]
        .iter()
        .any(|id| g.tensor(id).unwrap().kind != TensorKind::Constant);
    if second_live {
        return Ok(result(0, OsMethod::Algorithmic));
    }

    let out = g.tensor(&op.output).unwrap();
    let ob_s = out.size_bytes();
    let steps = crate::kernel_sim::steps_total(g, op_idx)?;
    let mut ext = StepExtrema::new(steps as usize);
    trace_op_visit(g, op_idx, &mut |e: &MemEvent| ext.absorb(e))?;

    // Inclusive reverse pass: a load in the same step counts as "still
    // pending" when the write happens, which is safe because every nest
    // issues its loads before its store.
    let mut min_at_or_after = u64::MAX;
    let mut min_d: i128 = 0;
    for s in (0..steps as usize).rev() {
        if ext.min_load[s] != u64::MAX {
            min_at_or_after = min_at_or_after.min(ext.min_load[s]);
        }
        if ext.write[s] != u64::MAX && min_at_or_after != u64::MAX {
            let d = min_at_or_after as i128 - ext.write[s] as i128;
            min_d = min_d.min(d);
        }
    }
    let o_s = (ob_s as i128 + min_d).clamp(0, ob_s as i128) as u64;
    Ok(result(o_s, OsMethod::Algorithmic))
}

// ---------------------------------------------------------------------------
// Analytic method
// ---------------------------------------------------------------------------

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a.rem_euclid(b));
    }
    a.abs().max(1)
}

/// `O_s` in closed form from the op geometry.
///
/// For windowed kinds the read front advances `a = a_num/a_den` input
/// elements per output element, starting `b` elements away from the first
/// write; the minimum displacement over the sweep is attained either at the
/// blow-up of the first row transition (case A) or at the final step
/// (case B). Elementwise and reshape kernels are perfectly diagonal;
/// fully-connected, softmax and concat pin to zero.
/// Exact minimum of `read_offset(step) - step` over the whole loop nest of a
/// windowed op, in elements.
///
/// Every step writes exactly the element whose index is the step number, so
/// the binding alignment pairs each step with its own lowest read. That read
/// sits at the clamped top-left tap of the window, which makes the expression
/// separable per axis; each axis is piecewise linear in the output position
/// with slope changes only while the window still hangs into the padding, so
/// a kernel-sized candidate set per axis finds the true minimum.
///
/// Returns `None` when no output position reads anything at all.
fn envelope_min_d(geom: &WindowGeom, kind: OpKind) -> Option<i128> {
    // First in-bounds tap along one axis, if any.
    let first_tap = |o: i128, s: i128, p: i128, d: i128, k: i128, extent: i128| -> Option<i128> {
        let start = o * s - p;
        let t0 = if start >= 0 {
            start
        } else {
            let skip = (-start).div_euclid(d) + i128::from((-start).rem_euclid(d) != 0);
            if skip >= k {
                return None;
            }
            start + skip * d
        };
        (t0 < extent).then_some(t0)
    };
    // Minimise `first_tap * read_weight - o * write_weight` over the axis.
    let axis_min = |out_ext: i128,
                    s: i128,
                    p: i128,
                    d: i128,
                    k: i128,
                    in_ext: i128,
                    read_w: i128,
                    write_w: i128|
     -> Option<i128> {
        let clip_end = p.div_euclid(s) + 1; // first unclipped position
        let mut best: Option<i128> = None;
        let mut eval = |o: i128| {
            if let Some(t0) = first_tap(o, s, p, d, k, in_ext) {
                let v = t0 * read_w - o * write_w;
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        };
        for o in 0..=clip_end.min(out_ext - 1) {
            eval(o);
        }
        eval(out_ext - 1);
        best
    };
    let (iw, id) = (geom.iw as i128, geom.id as i128);
    let (ow, od) = (geom.ow as i128, geom.od as i128);
    let y = axis_min(
        geom.oh as i128,
        geom.sh as i128,
        geom.ph as i128,
        geom.dh as i128,
        geom.kh as i128,
        geom.ih as i128,
        iw * id,
        ow * od,
    )?;
    let x = axis_min(
        ow,
        geom.sw as i128,
        geom.pw as i128,
        geom.dw as i128,
        geom.kw as i128,
        iw,
        id,
        od,
    )?;
    // Within one output position, the last channel written pairs with the
    // lowest channel read.
    let chan = match kind {
        OpKind::Conv2d => -(od - 1),
        OpKind::DepthwiseConv2d => id - od,
        _ => 0,
    };
    Some(y + x + chan)
}

pub fn os_analytic(g: &TensorGraph, op_idx: usize) -> Result<OverlapResult> {
    let op = &g.ops[op_idx];
    let out = g.tensor(&op.output).unwrap();
    let ob_s = out.size_bytes();
    let in0 = op
        .inputs
        .first()
        .and_then(|id| g.tensor(id))
        .ok_or_else(|| Error::op(&op.id, "has no inputs"))?;
    if in0.kind == TensorKind::Constant {
        return Ok(result(0, OsMethod::Analytic));
    }
    let second_live = op.inputs[1..]
        .iter()
        .any(|id| g.tensor(id).unwrap().kind != TensorKind::Constant);
    if second_live {
        return Ok(result(0, OsMethod::Analytic));
    }

    match op.kind {
        OpKind::ElementwiseUnary | OpKind::ElementwiseBinary | OpKind::Reshape => {
            return Ok(result(ob_s, OsMethod::Analytic));
        }
        OpKind::FullyConnected | OpKind::Softmax | OpKind::Concat => {
            return Ok(result(0, OsMethod::Analytic));
        }
        _ => {}
    }

    let geom = window_geom(g, op_idx)?;
    if geom.batch > 1 {
        // The read front rewinds to the top of the image at every batch
        // boundary; no safe overlap survives that.
        return Ok(result(0, OsMethod::Analytic));
    }
    let iw = geom.iw as i128;
    let id = geom.id as i128;
    let sh = geom.sh as i128;
    let sw = geom.sw as i128;
    let ph = geom.ph as i128;
    let pw = geom.pw as i128;
    let ow = geom.ow as i128;
    let od = geom.od as i128;
    let kc = geom.kc as i128;

    let (a_num_raw, a_den_raw, b): (i128, i128, i128) = match op.kind {
        OpKind::DepthwiseConv2d => (
            sh * iw,
            ow * kc,
            (ow * sw - ph * iw - sh * iw - sw - pw + 1) * id,
        ),
        OpKind::Conv2d => (
            sh * iw * id,
            ow * od,
            (ow * sw - ph * iw - sh * iw - sw - pw) * id + 1,
        ),
        OpKind::AvgPool | OpKind::MaxPool => (
            sh * iw,
            ow,
            (ow * sw - ph * iw - sh * iw - sw - pw) * id + 1,
        ),
        _ => unreachable!(),
    };
    if a_num_raw <= 0 || a_den_raw <= 0 {
        return Err(Error::op(&op.id, "degenerate geometry: non-positive advance ratio"));
    }
    let g_ = gcd(a_num_raw, a_den_raw);
    let (a_num, a_den) = (a_num_raw / g_, a_den_raw / g_);

    let i_c = (geom.batch * geom.oh * geom.ow * geom.od) as i128;
    // Case A: worst displacement at a row transition.
    let case_a = (b * a_den).div_euclid(a_num);
    // Case B: displacement at the last output element.
    let case_b = (a_num * i_c + (b - i_c) * a_den).div_euclid(a_den);
    // Case C: the clamped-window envelope, exact per axis. The row-transition
    // and end-of-loop cases cover every alignment on shapes where the window
    // sweep is regular, but heavily padded or gapped sweeps (stride beyond
    // the kernel, channel multipliers) can bind at a row start instead.
    let Some(case_c) = envelope_min_d(&geom, op.kind) else {
        // The op never reads its input: nothing can be overlapped safely.
        return Ok(result(0, OsMethod::Analytic));
    };
    let min_d = case_a.min(case_b).min(case_c);

    let o_s = (ob_s as i128 + min_d * geom.ts as i128).clamp(0, ob_s as i128) as u64;
    Ok(OverlapResult {
        o_s,
        method: OsMethod::Analytic,
        detail: Some(OverlapDetail {
            a_num: a_num as i64,
            a_den: a_den as i64,
            b: b as i64,
            min_d: min_d as i64,
        }),
    })
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Per-op agreement report across the three methods.
#[derive(Debug, Clone, Serialize)]
pub struct OpOverlapReport {
    pub op: String,
    /// Exact value from the trace replay, when the op is traceable.
    pub trace: Option<u64>,
    /// Reverse-scan value, when the op has a registered nest.
    pub algorithmic: Option<u64>,
    /// Closed-form value; always available and what the planner uses.
    pub analytic: u64,
    pub o_s: u64,
    /// Exact minus analytic (conservatism left on the table).
    pub gap_bytes: u64,
    /// Gap as a percentage of the exact value.
    pub gap_pct: f64,
    /// True when trace and reverse scan agree and the closed form does not
    /// exceed them.
    pub consistent: bool,
}

/// Run all three methods on one op and reconcile them.
pub fn cross_validate(g: &TensorGraph, op_idx: usize) -> Result<OpOverlapReport> {
    let op = &g.ops[op_idx];
    let trace = os_from_trace_streamed(g, op_idx).ok().map(|r| r.o_s);
    let algorithmic = os_algorithmic(g, op_idx).ok().map(|r| r.o_s);
    let analytic = os_analytic(g, op_idx)?.o_s;

    let exact = trace.or(algorithmic);
    let mut consistent = true;
    if let (Some(t), Some(a)) = (trace, algorithmic) {
        consistent &= t == a;
    }
    if let Some(e) = exact {
        consistent &= analytic <= e;
    }
    let gap_bytes = exact.map_or(0, |e| e.saturating_sub(analytic));
    let gap_pct = match exact {
        Some(e) if e > 0 => 100.0 * gap_bytes as f64 / e as f64,
        _ => 0.0,
    };
    Ok(OpOverlapReport {
        op: op.id.clone(),
        trace,
        algorithmic,
        analytic,
        o_s: analytic,
        gap_bytes,
        gap_pct,
        consistent,
    })
}

/// Whole-graph overlap report.
#[derive(Debug, Clone, Serialize)]
pub struct GraphReport {
    pub model: String,
    pub ops: Vec<OpOverlapReport>,
    pub consistent: bool,
}

impl GraphReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation cannot fail")
    }
}

/// Cross-validate every op in the graph.
pub fn analyze_graph(g: &TensorGraph) -> Result<GraphReport> {
    let mut ops = Vec::with_capacity(g.ops.len());
    for i in 0..g.ops.len() {
        ops.push(cross_validate(g, i)?);
    }
    let consistent = ops.iter().all(|r| r.consistent);
    Ok(GraphReport {
        model: g.name.clone(),
        ops,
        consistent,
    })
}
