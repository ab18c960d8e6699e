//! Trace envelopes and SVG visualisation.
//!
//! The envelope compresses an op's access trace into per-bucket offset
//! ranges, which is all a picture of the memory diagonal needs; the SVG
//! renderers draw either that envelope or the block layout of a plan.

use std::fmt::Write as _;

use crate::error::Result;
use crate::kernel_sim::{steps_total, trace_op_visit, BufferRole, EventKind, MemEvent};
use crate::memory_planner::AllocationPlan;
use crate::model_graph::{compute_scopes, TensorGraph, TensorKind};

/// Offset ranges of one step bucket. `None` when the bucket saw no event of
/// that class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopeRow {
    /// Step range covered, inclusive start / exclusive end.
    pub steps: (u64, u64),
    /// (min, max) input0 load offsets in the bucket.
    pub loads: Option<(u64, u64)>,
    /// (min, max) output store/update offsets in the bucket.
    pub stores: Option<(u64, u64)>,
}

/// Bucket the access trace of op `op_idx` into at most `buckets` rows.
pub fn trace_envelope(g: &TensorGraph, op_idx: usize, buckets: usize) -> Result<Vec<EnvelopeRow>> {
    let steps = steps_total(g, op_idx)?;
    let buckets = (buckets.max(1) as u64).min(steps.max(1));
    let mut rows: Vec<EnvelopeRow> = (0..buckets)
        .map(|k| EnvelopeRow {
            steps: (k * steps / buckets, (k + 1) * steps / buckets),
            loads: None,
            stores: None,
        })
        .collect();
    let starts: Vec<u64> = rows.iter().map(|r| r.steps.0).collect();
    let bucket_of = move |step: u64| -> usize {
        // Inverse of the row boundaries above, robust to rounding.
        let mut k = ((step as u128 * buckets as u128) / steps.max(1) as u128) as usize;
        while k + 1 < starts.len() && step >= starts[k + 1] {
            k += 1;
        }
        while k > 0 && step < starts[k] {
            k -= 1;
        }
        k
    };
    trace_op_visit(g, op_idx, &mut |e: &MemEvent| {
        let k = bucket_of(e.step);
        let slot = match (e.buffer, e.kind) {
            (BufferRole::Input0, EventKind::Load) => &mut rows[k].loads,
            (BufferRole::Output, EventKind::Store | EventKind::Update) => &mut rows[k].stores,
            _ => return,
        };
        *slot = Some(match *slot {
            None => (e.offset, e.offset),
            Some((lo, hi)) => (lo.min(e.offset), hi.max(e.offset)),
        });
    })?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub width: u32,
    pub height: u32,
    /// Envelope buckets along the step axis.
    pub buckets: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            width: 900,
            height: 480,
            buckets: 160,
        }
    }
}

struct Frame {
    width: f64,
    height: f64,
    margin: f64,
}

impl Frame {
    fn x(&self, v: f64, max: f64) -> f64 {
        self.margin + v / max.max(1.0) * (self.width - 2.0 * self.margin)
    }

    /// Offset axis grows downwards from the top margin.
    fn y(&self, v: f64, max: f64) -> f64 {
        self.margin + v / max.max(1.0) * (self.height - 2.0 * self.margin)
    }
}

fn polyline(svg: &mut String, points: &[(f64, f64)], colour: &str, dashed: bool) {
    if points.is_empty() {
        return;
    }
    let mut attr = String::new();
    for (x, y) in points {
        let _ = write!(attr, "{x:.1},{y:.1} ");
    }
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
        attr.trim_end()
    );
}

/// Render the load/store envelope of one op as a standalone SVG document.
pub fn render_trace(g: &TensorGraph, op_idx: usize, opts: &RenderOptions) -> Result<String> {
    let rows = trace_envelope(g, op_idx, opts.buckets)?;
    let op = &g.ops[op_idx];
    let in_size = op
        .inputs
        .first()
        .and_then(|id| g.tensor(id))
        .map_or(0, |t| t.size_bytes());
    let out_size = g.tensor(&op.output).unwrap().size_bytes();
    let max_off = in_size.max(out_size).max(1) as f64;
    let max_step = rows.last().map_or(1, |r| r.steps.1).max(1) as f64;

    let frame = Frame {
        width: opts.width as f64,
        height: opts.height as f64,
        margin: 40.0,
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        opts.width, opts.height, opts.width, opts.height
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        opts.width, opts.height
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"12\" fill=\"#333\">op `{}` — step vs byte offset (loads solid, stores dashed)</text>",
        frame.margin, op.id
    );

    let mid = |r: &EnvelopeRow| (r.steps.0 + r.steps.1) as f64 / 2.0;
    let series = |pick: fn(&EnvelopeRow) -> Option<(u64, u64)>, take_hi: bool| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| {
                pick(r).map(|(lo, hi)| {
                    let v = if take_hi { hi } else { lo };
                    (frame.x(mid(r), max_step), frame.y(v as f64, max_off))
                })
            })
            .collect()
    };
    polyline(&mut svg, &series(|r| r.loads, false), "#1f77b4", false);
    polyline(&mut svg, &series(|r| r.loads, true), "#1f77b4", false);
    polyline(&mut svg, &series(|r| r.stores, false), "#d62728", true);
    polyline(&mut svg, &series(|r| r.stores, true), "#d62728", true);

    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Render a plan's arena layout: time (execution position) left to right,
/// arena offset top to bottom, one block per buffer lifetime.
pub fn render_blocks(g: &TensorGraph, plan: &AllocationPlan) -> Result<String> {
    let order: Vec<usize> = plan
        .order
        .iter()
        .map(|id| {
            g.op_index(id)
                .ok_or_else(|| crate::error::Error::UnknownOp(id.clone()))
        })
        .collect::<Result<_>>()?;
    let scopes = compute_scopes(g, &order)?;
    let positions = order.len().max(1) as f64;
    let arena = plan.arena_size.max(1) as f64;

    let frame = Frame {
        width: 900.0,
        height: 480.0,
        margin: 40.0,
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"480\" viewBox=\"0 0 900 480\">"
    );
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"900\" height=\"480\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"40\" y=\"20\" font-family=\"monospace\" font-size=\"12\" fill=\"#333\">{} — {} bytes, {}</text>",
        plan.model, plan.arena_size, plan.strategy
    );
    let palette = ["#8ecae6", "#ffb703", "#90be6d", "#f28482", "#b5838d", "#a8dadc"];
    for (i, buffer) in plan.buffers.iter().enumerate() {
        let Some(ti) = g.tensor_index(&buffer.tensor) else { continue };
        if g.tensors()[ti].kind == TensorKind::Constant {
            continue;
        }
        let first = scopes.first_use[ti].max(0) as f64;
        let last = (scopes.last_use[ti].min(positions as i64 - 1).max(0) + 1) as f64;
        let x0 = frame.x(first, positions);
        let x1 = frame.x(last, positions);
        let y0 = frame.y(buffer.offset as f64, arena);
        let y1 = frame.y((buffer.offset + buffer.size) as f64, arena);
        let _ = writeln!(
            svg,
            "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\" fill-opacity=\"0.8\" stroke=\"#333\" stroke-width=\"0.5\"/>",
            (x1 - x0).max(1.0),
            (y1 - y0).max(1.0),
            palette[i % palette.len()]
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" fill=\"#111\">{}</text>",
            x0 + 2.0,
            y0 + 11.0,
            buffer.tensor
        );
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}
