//! Deterministic replay validation of allocation plans.
//!
//! The validator replays the model's full access trace against the planned
//! arena, tracking per-byte ownership. A byte is owned by the tensor that
//! last wrote it (graph inputs own their bytes from the start). Every load
//! checks that the bytes it reads still belong to the tensor being read;
//! a mismatch means an earlier store destroyed a value that was still
//! needed, and is reported as a clobber against the op that wrote it.
//! Graph outputs are given a virtual read at the very end so that anything
//! overwriting them before execution finishes is caught too.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel_sim::{steps_total, trace_op_visit, BufferRole, EventKind, MemEvent};
use crate::memory_planner::AllocationPlan;
use crate::model_graph::{compute_scopes, TensorGraph, TensorKind};

/// One detected overwrite of a still-needed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClobberRecord {
    /// Global step of the write that destroyed the value.
    pub step: u64,
    pub writer_op: String,
    /// Arena address of the first destroyed byte found.
    pub address: u64,
    /// Tensor whose value was destroyed.
    pub victim: String,
    /// Global step of the read that discovered the damage.
    pub pending_read_step: u64,
}

const MAX_RECORDS: usize = 1024;

const NO_OWNER: u32 = u32::MAX;

struct Replay<'a> {
    g: &'a TensorGraph,
    owner: Vec<u32>,
    last_write_step: Vec<u64>,
    last_write_op: Vec<u32>,
    records: Vec<ClobberRecord>,
}

impl<'a> Replay<'a> {
    fn check_read(&mut self, tensor: usize, addr: u64, len: u64, read_step: u64) {
        if self.records.len() >= MAX_RECORDS {
            return;
        }
        for byte in addr..addr + len {
            let b = byte as usize;
            if self.owner[b] != tensor as u32 {
                let writer = self.last_write_op[b];
                self.records.push(ClobberRecord {
                    step: self.last_write_step[b],
                    writer_op: if writer == NO_OWNER {
                        "<initial>".to_string()
                    } else {
                        self.g.ops[writer as usize].id.clone()
                    },
                    address: byte,
                    victim: self.g.tensors()[tensor].id.clone(),
                    pending_read_step: read_step,
                });
                return;
            }
        }
    }

    fn write(&mut self, tensor: usize, op: usize, addr: u64, len: u64, step: u64) {
        for byte in addr..addr + len {
            let b = byte as usize;
            self.owner[b] = tensor as u32;
            self.last_write_step[b] = step;
            self.last_write_op[b] = op as u32;
        }
    }
}

/// Replay `plan` against `g` and report every clobber found (an empty vec
/// means the plan is safe). Structural problems — missing or misssized
/// buffers, buffers outside the arena, a bad order — are errors, not
/// clobbers.
pub fn validate(g: &TensorGraph, plan: &AllocationPlan) -> Result<Vec<ClobberRecord>> {
    let order: Vec<usize> = plan
        .order
        .iter()
        .map(|id| g.op_index(id).ok_or_else(|| Error::UnknownOp(id.clone())))
        .collect::<Result<_>>()?;
    compute_scopes(g, &order)?;

    // Structural checks: every non-constant tensor needs exactly one
    // correctly sized buffer inside the arena.
    let mut offsets: Vec<Option<u64>> = vec![None; g.tensors().len()];
    for buffer in &plan.buffers {
        let ti = g
            .tensor_index(&buffer.tensor)
            .ok_or_else(|| Error::Structural(format!("plan places unknown tensor `{}`", buffer.tensor)))?;
        let spec = &g.tensors()[ti];
        if buffer.size != spec.size_bytes() {
            return Err(Error::Structural(format!(
                "buffer for `{}` is {} bytes, tensor needs {}",
                buffer.tensor,
                buffer.size,
                spec.size_bytes()
            )));
        }
        if buffer.offset + buffer.size > plan.arena_size {
            return Err(Error::Structural(format!(
                "buffer for `{}` ends at {}, outside the {}-byte arena",
                buffer.tensor,
                buffer.offset + buffer.size,
                plan.arena_size
            )));
        }
        if offsets[ti].replace(buffer.offset).is_some() {
            return Err(Error::Structural(format!(
                "tensor `{}` has two buffers",
                buffer.tensor
            )));
        }
    }
    for (ti, t) in g.tensors().iter().enumerate() {
        if t.kind != TensorKind::Constant && offsets[ti].is_none() {
            return Err(Error::Structural(format!(
                "tensor `{}` has no buffer in the plan",
                t.id
            )));
        }
    }

    let arena = plan.arena_size as usize;
    let mut replay = Replay {
        g,
        owner: vec![NO_OWNER; arena],
        last_write_step: vec![0; arena],
        last_write_op: vec![NO_OWNER; arena],
        records: Vec::new(),
    };

    // Graph inputs are materialised before step 0.
    for (ti, t) in g.tensors().iter().enumerate() {
        if t.kind == TensorKind::Input {
            let off = offsets[ti].unwrap();
            for byte in off..off + t.size_bytes() {
                replay.owner[byte as usize] = ti as u32;
            }
        }
    }

    let mut base = 0u64;
    for &oi in &order {
        let op = &g.ops[oi];
        let in0 = op.inputs.first().and_then(|id| g.tensor_index(id));
        let in1 = op.inputs.get(1..).unwrap_or_default()
            .iter()
            .map(|id| g.tensor_index(id).unwrap())
            .find(|&ti| g.tensors()[ti].kind != TensorKind::Constant);
        let out = g.tensor_index(&op.output).unwrap();
        let out_off = offsets[out].unwrap();
        let ts = g.tensors()[out].dtype.size_bytes();

        let mut structural: Option<Error> = None;
        let op_steps = trace_op_visit(g, oi, &mut |e: &MemEvent| {
            if structural.is_some() {
                return;
            }
            let (tensor, tensor_off) = match e.buffer {
                BufferRole::Input0 => {
                    let ti = in0.expect("input0 event without an input");
                    (ti, offsets[ti])
                }
                BufferRole::Input1 => {
                    let ti = in1.expect("input1 event without a live input1");
                    (ti, offsets[ti])
                }
                BufferRole::Output => (out, Some(out_off)),
            };
            let Some(tensor_off) = tensor_off else {
                // Constant operand: lives outside the arena, nothing to check.
                return;
            };
            let spec = &g.tensors()[tensor];
            if e.offset + ts > spec.size_bytes() {
                structural = Some(Error::Structural(format!(
                    "op `{}` touches byte {} of `{}`, past its {}-byte extent",
                    op.id,
                    e.offset,
                    spec.id,
                    spec.size_bytes()
                )));
                return;
            }
            let addr = tensor_off + e.offset;
            let step = base + e.step;
            match e.kind {
                EventKind::Load => replay.check_read(tensor, addr, ts, step),
                EventKind::Store => replay.write(tensor, oi, addr, ts, step),
                EventKind::Update => {
                    // Accumulation rereads its own partial value first.
                    replay.check_read(tensor, addr, ts, step);
                    replay.write(tensor, oi, addr, ts, step);
                }
            }
        })?;
        if let Some(err) = structural {
            return Err(err);
        }
        base += op_steps;
    }

    // Virtual end-of-graph reads: outputs must survive to the end.
    for (ti, t) in g.tensors().iter().enumerate() {
        if t.kind != TensorKind::Output {
            continue;
        }
        let off = offsets[ti].unwrap();
        for elem in 0..t.elements() {
            let ts = t.dtype.size_bytes();
            replay.check_read(ti, off + elem * ts, ts, base);
        }
    }

    Ok(replay.records)
}

/// Total step count of a full-model replay in `order` — convenience for
/// sizing progress reporting.
pub fn model_steps(g: &TensorGraph, order: &[usize]) -> Result<u64> {
    let mut total = 0u64;
    for &oi in order {
        total += steps_total(g, oi)?;
    }
    Ok(total)
}
