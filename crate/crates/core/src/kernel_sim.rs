//! Reference kernel models emitting per-element memory access traces.
//!
//! Each op kind has a canonical loop nest mirroring how a scalar interpreter
//! would execute it: one *step* per output element (per accumulation step for
//! fully-connected), all loads of a step strictly before its write, and
//! writes landing in ascending output order for the dense kernels. Offsets
//! are bytes relative to the start of the tensor's buffer.

use std::io::Write;

use crate::error::{Error, Result};
use crate::memory_planner::AllocationPlan;
use crate::model_graph::{
    compute_scopes, window_geom, OpKind, TensorGraph, TensorKind, WindowGeom,
};

/// Which buffer of the op an event touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferRole {
    /// First input operand — the overlap candidate.
    Input0,
    /// Second live input operand, when present.
    Input1,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Load,
    Store,
    /// Read-modify-write of an output element (accumulation).
    Update,
}

/// One element-granularity access in an op's trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEvent {
    pub step: u64,
    pub buffer: BufferRole,
    pub kind: EventKind,
    pub offset: u64,
}

/// A fully materialised op trace.
#[derive(Debug, Clone)]
pub struct TraceSummary {
    pub events: Vec<MemEvent>,
    pub steps_total: u64,
    pub has_input1_events: bool,
}

/// Roles resolved to tensor indices for one op.
struct OpIo {
    in0: usize,
    in0_live: bool,
    in1: Option<usize>,
    out: usize,
    /// Element size in bytes.
    ts: u64,
}

fn resolve_io(g: &TensorGraph, op_idx: usize) -> Result<OpIo> {
    let op = &g.ops[op_idx];
    let in0_id = op
        .inputs
        .first()
        .ok_or_else(|| Error::op(&op.id, "has no inputs"))?;
    let in0 = g.tensor_index(in0_id).unwrap();
    let in0_live = g.tensors()[in0].kind != TensorKind::Constant;
    let live_extras: Vec<usize> = op.inputs[1..]
        .iter()
        .map(|id| g.tensor_index(id).unwrap())
        .filter(|&ti| g.tensors()[ti].kind != TensorKind::Constant)
        .collect();
    if live_extras.len() > 1 {
        return Err(Error::op(
            &op.id,
            "trace model supports at most two live inputs",
        ));
    }
    let out = g.tensor_index(&op.output).unwrap();
    Ok(OpIo {
        in0,
        in0_live,
        in1: live_extras.first().copied(),
        out,
        ts: g.tensors()[out].dtype.size_bytes(),
    })
}

/// Number of simulation steps `trace_op_visit` will take, without tracing.
pub fn steps_total(g: &TensorGraph, op_idx: usize) -> Result<u64> {
    let op = &g.ops[op_idx];
    let out_elems = g.tensor(&op.output).unwrap().elements();
    Ok(match op.kind {
        OpKind::FullyConnected => {
            let k = g.tensor(&op.inputs[0]).unwrap().elements();
            k * out_elems
        }
        _ => out_elems,
    })
}

/// Stream the access trace of op `op_idx` through `visit`.
///
/// Returns the step count. Constant operands emit no load events; a second
/// live input emits [`BufferRole::Input1`] events.
pub fn trace_op_visit<F: FnMut(&MemEvent)>(
    g: &TensorGraph,
    op_idx: usize,
    visit: &mut F,
) -> Result<u64> {
    let op = &g.ops[op_idx];
    let io = resolve_io(g, op_idx)?;
    let ts = io.ts;
    let out_elems = g.tensors()[io.out].elements();

    let mut emit = |step: u64, buffer: BufferRole, kind: EventKind, elem: u64| {
        visit(&MemEvent {
            step,
            buffer,
            kind,
            offset: elem * ts,
        })
    };

    match op.kind {
        OpKind::ElementwiseUnary | OpKind::Reshape => {
            for i in 0..out_elems {
                if io.in0_live {
                    emit(i, BufferRole::Input0, EventKind::Load, i);
                }
                emit(i, BufferRole::Output, EventKind::Store, i);
            }
            Ok(out_elems)
        }
        OpKind::ElementwiseBinary => {
            for i in 0..out_elems {
                if io.in0_live {
                    emit(i, BufferRole::Input0, EventKind::Load, i);
                }
                if io.in1.is_some() {
                    emit(i, BufferRole::Input1, EventKind::Load, i);
                }
                emit(i, BufferRole::Output, EventKind::Store, i);
            }
            Ok(out_elems)
        }
        OpKind::Concat => {
            let mut step = 0u64;
            for (r, input) in op.inputs.iter().enumerate() {
                let t = g.tensor(input).unwrap();
                let live = t.kind != TensorKind::Constant;
                let role = if r == 0 { BufferRole::Input0 } else { BufferRole::Input1 };
                for i in 0..t.elements() {
                    if live {
                        emit(step, role, EventKind::Load, i);
                    }
                    emit(step, BufferRole::Output, EventKind::Store, step);
                    step += 1;
                }
            }
            Ok(step)
        }
        OpKind::Softmax => {
            // Normalisation pass: the whole input is read up front.
            if io.in0_live {
                for i in 0..out_elems {
                    emit(0, BufferRole::Input0, EventKind::Load, i);
                }
            }
            for i in 0..out_elems {
                if io.in0_live {
                    emit(i, BufferRole::Input0, EventKind::Load, i);
                }
                emit(i, BufferRole::Output, EventKind::Store, i);
            }
            Ok(out_elems)
        }
        OpKind::FullyConnected => {
            // Accumulator sweep: the input element is loaded once per output
            // element it feeds, walking the outputs from the top down.
            let k_elems = g.tensors()[io.in0].elements();
            let j_elems = out_elems;
            let mut step = 0u64;
            for k in 0..k_elems {
                for i in 0..j_elems {
                    let j = j_elems - 1 - i;
                    if io.in0_live {
                        emit(step, BufferRole::Input0, EventKind::Load, k);
                    }
                    let kind = if k == 0 { EventKind::Store } else { EventKind::Update };
                    emit(step, BufferRole::Output, kind, j);
                    step += 1;
                }
            }
            Ok(step)
        }
        OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::AvgPool | OpKind::MaxPool => {
            trace_windowed(g, op_idx, &io, &mut emit)
        }
    }
}

fn trace_windowed<F: FnMut(u64, BufferRole, EventKind, u64)>(
    g: &TensorGraph,
    op_idx: usize,
    io: &OpIo,
    emit: &mut F,
) -> Result<u64> {
    let geom = window_geom(g, op_idx)?;
    let kind = g.ops[op_idx].kind;
    let WindowGeom {
        batch, ih, iw, id, oh, ow, od, kh, kw, kc, sh, sw, dh, dw, ph, pw, ..
    } = geom;
    let in_at = |b: u64, r: u64, c: u64, d: u64| ((b * ih + r) * iw + c) * id + d;
    let mut step = 0u64;
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                // Per output position, walk the channel axis innermost so
                // stores stay contiguous and strictly ascending.
                let chans: u64 = match kind {
                    OpKind::Conv2d => od,
                    OpKind::DepthwiseConv2d => id * kc,
                    _ => id,
                };
                for ch in 0..chans {
                    if io.in0_live {
                        for ky in 0..kh {
                            let iy = (oy * sh + ky * dh) as i64 - ph as i64;
                            if iy < 0 || iy as u64 >= ih {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * sw + kx * dw) as i64 - pw as i64;
                                if ix < 0 || ix as u64 >= iw {
                                    continue;
                                }
                                match kind {
                                    OpKind::Conv2d => {
                                        for c in 0..id {
                                            emit(
                                                step,
                                                BufferRole::Input0,
                                                EventKind::Load,
                                                in_at(b, iy as u64, ix as u64, c),
                                            );
                                        }
                                    }
                                    OpKind::DepthwiseConv2d => {
                                        let ic = ch / kc;
                                        emit(
                                            step,
                                            BufferRole::Input0,
                                            EventKind::Load,
                                            in_at(b, iy as u64, ix as u64, ic),
                                        );
                                    }
                                    _ => {
                                        emit(
                                            step,
                                            BufferRole::Input0,
                                            EventKind::Load,
                                            in_at(b, iy as u64, ix as u64, ch),
                                        );
                                    }
                                }
                            }
                        }
                    }
                    emit(step, BufferRole::Output, EventKind::Store, step);
                    step += 1;
                }
            }
        }
    }
    Ok(step)
}

/// Materialise the full trace of one op.
pub fn trace_op(g: &TensorGraph, op_idx: usize) -> Result<TraceSummary> {
    let mut events = Vec::new();
    let mut has_input1 = false;
    let steps = trace_op_visit(g, op_idx, &mut |e: &MemEvent| {
        if e.buffer == BufferRole::Input1 {
            has_input1 = true;
        }
        events.push(*e);
    })?;
    Ok(TraceSummary {
        events,
        steps_total: steps,
        has_input1_events: has_input1,
    })
}

/// One access in a whole-model replay, on a global step clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArenaEvent {
    pub step: u64,
    /// Op index in the graph.
    pub op: usize,
    /// Tensor index in the graph.
    pub tensor: usize,
    pub kind: EventKind,
    /// Byte address: arena-absolute when a plan is given, buffer-relative
    /// otherwise.
    pub addr: u64,
}

/// Replay the whole model in `order`, streaming every access.
///
/// With a plan, addresses are rebased to arena offsets and constant-tensor
/// accesses are skipped (constants live outside the arena). Returns the total
/// step count.
pub fn trace_model<F: FnMut(&ArenaEvent)>(
    g: &TensorGraph,
    order: &[usize],
    plan: Option<&AllocationPlan>,
    visit: &mut F,
) -> Result<u64> {
    compute_scopes(g, order)?;
    let mut base = 0u64;
    for &oi in order {
        let io = resolve_io(g, oi)?;
        let resolve = |role: BufferRole| -> usize {
            match role {
                BufferRole::Input0 => io.in0,
                BufferRole::Input1 => io.in1.expect("input1 event without a live input1"),
                BufferRole::Output => io.out,
            }
        };
        let op_steps = match plan {
            None => trace_op_visit(g, oi, &mut |e: &MemEvent| {
                visit(&ArenaEvent {
                    step: base + e.step,
                    op: oi,
                    tensor: resolve(e.buffer),
                    kind: e.kind,
                    addr: e.offset,
                });
            })?,
            Some(plan) => {
                let mut offsets = [None::<u64>; 3];
                for (slot, ti) in [(0, Some(io.in0)), (1, io.in1), (2, Some(io.out))] {
                    if let Some(ti) = ti {
                        let t = &g.tensors()[ti];
                        if t.kind == TensorKind::Constant {
                            continue;
                        }
                        offsets[slot] = Some(plan.offset_of(&t.id).ok_or_else(|| {
                            Error::Structural(format!(
                                "tensor `{}` has no buffer in the plan",
                                t.id
                            ))
                        })?);
                    }
                }
                trace_op_visit(g, oi, &mut |e: &MemEvent| {
                    let slot = role_index(e.buffer) as usize;
                    let Some(off) = offsets[slot] else { return };
                    visit(&ArenaEvent {
                        step: base + e.step,
                        op: oi,
                        tensor: resolve(e.buffer),
                        kind: e.kind,
                        addr: off + e.offset,
                    });
                })?
            }
        };
        base += op_steps;
    }
    Ok(base)
}

fn role_index(role: BufferRole) -> u8 {
    match role {
        BufferRole::Input0 => 0,
        BufferRole::Input1 => 1,
        BufferRole::Output => 2,
    }
}

fn kind_index(kind: EventKind) -> u8 {
    match kind {
        EventKind::Load => 0,
        EventKind::Store => 1,
        EventKind::Update => 2,
    }
}

fn role_name(role: BufferRole) -> &'static str {
    match role {
        BufferRole::Input0 => "input0",
        BufferRole::Input1 => "input1",
        BufferRole::Output => "output",
    }
}

fn kind_name(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Load => "load",
        EventKind::Store => "store",
        EventKind::Update => "update",
    }
}

/// Write the trace of one op as fixed-width little-endian records:
/// `u64 step, u8 buffer, u8 kind, u64 offset` — 18 bytes per event.
pub fn dump_trace_binary<W: Write>(g: &TensorGraph, op_idx: usize, w: &mut W) -> Result<()> {
    let mut err = None;
    trace_op_visit(g, op_idx, &mut |e: &MemEvent| {
        if err.is_some() {
            return;
        }
        let mut rec = [0u8; 18];
        rec[0..8].copy_from_slice(&e.step.to_le_bytes());
        rec[8] = role_index(e.buffer);
        rec[9] = kind_index(e.kind);
        rec[10..18].copy_from_slice(&e.offset.to_le_bytes());
        if let Err(e) = w.write_all(&rec) {
            err = Some(e);
        }
    })?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Write the trace of one op as CSV with a `step,buffer,kind,offset` header.
pub fn dump_trace_csv<W: Write>(g: &TensorGraph, op_idx: usize, w: &mut W) -> Result<()> {
    let mut err: Option<std::io::Error> = None;
    if let Err(e) = writeln!(w, "step,buffer,kind,offset") {
        return Err(e.into());
    }
    trace_op_visit(g, op_idx, &mut |e: &MemEvent| {
        if err.is_some() {
            return;
        }
        if let Err(io_err) = writeln!(
            w,
            "{},{},{},{}",
            e.step,
            role_name(e.buffer),
            kind_name(e.kind),
            e.offset
        ) {
            err = Some(io_err);
        }
    })?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
