//! Tensor graph model: dtypes, tensors, ops, validation, serialisation and
//! execution-order utilities.
//!
//! Graphs are flat lists of tensors and ops. Shapes are row-major with the
//! innermost (channel) dimension last; windowed ops accept `[h, w, c]` or
//! `[b, h, w, c]`. All sizes and offsets elsewhere in the crate are bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    U8,
    I32,
    F32,
}

impl DType {
    pub fn size_bytes(self) -> u64 {
        match self {
            DType::I8 | DType::U8 => 1,
            DType::I32 | DType::F32 => 4,
        }
    }
}

impl FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i8" => Ok(DType::I8),
            "u8" => Ok(DType::U8),
            "i32" => Ok(DType::I32),
            "f32" => Ok(DType::F32),
            other => Err(Error::Parse(format!("unknown dtype `{other}`"))),
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DType::I8 => "i8",
            DType::U8 => "u8",
            DType::I32 => "i32",
            DType::F32 => "f32",
        };
        f.write_str(s)
    }
}

/// Storage class of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    /// Fed from outside the graph; materialised in the arena before step 0.
    Input,
    /// Produced by an op and read by nobody after the graph finishes — must
    /// survive until the end of execution.
    Output,
    Intermediate,
    /// Read-only weights/parameters living outside the arena.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv2d,
    DepthwiseConv2d,
    AvgPool,
    MaxPool,
    FullyConnected,
    ElementwiseUnary,
    ElementwiseBinary,
    Softmax,
    Reshape,
    Concat,
}

impl OpKind {
    /// Ops that slide a spatial window over the input.
    pub fn is_windowed(self) -> bool {
        matches!(
            self,
            OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::AvgPool | OpKind::MaxPool
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

/// A tensor declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub id: String,
    pub shape: Vec<u64>,
    pub dtype: DType,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn elements(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn size_bytes(&self) -> u64 {
        self.elements() * self.dtype.size_bytes()
    }
}

/// Window parameters for spatial ops. `kernel` is `[kh, kw, d]`, where `d`
/// holds the input-channel count for conv2d, the channel multiplier for
/// depthwise and 1 for pooling. Non-windowed ops ignore the whole struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpParams {
    pub kernel: [u64; 3],
    pub stride: [u64; 2],
    pub dilation: [u64; 2],
    pub padding: Padding,
}

impl Default for OpParams {
    fn default() -> Self {
        OpParams {
            kernel: [1, 1, 1],
            stride: [1, 1],
            dilation: [1, 1],
            padding: Padding::Valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: String,
    pub kind: OpKind,
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default)]
    pub params: OpParams,
}

/// One problem found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Offending op, when the problem is attributable to one.
    pub op: Option<String>,
    /// Offending tensor, when the problem is attributable to one.
    pub tensor: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.op, &self.tensor) {
            (Some(op), _) => write!(f, "op `{op}`: {}", self.message),
            (None, Some(t)) => write!(f, "tensor `{t}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

fn violation(op: Option<&str>, tensor: Option<&str>, message: impl Into<String>) -> Violation {
    Violation {
        op: op.map(str::to_string),
        tensor: tensor.map(str::to_string),
        message: message.into(),
    }
}

/// A dataflow graph over named tensors.
///
/// Construction only enforces referential integrity (ids resolve, no
/// duplicates); semantic checks live in [`validate_graph`] so that broken
/// graphs can still be constructed, inspected and reported on.
#[derive(Debug, Clone)]
pub struct TensorGraph {
    pub name: String,
    tensors: Vec<TensorSpec>,
    pub ops: Vec<OpNode>,
    index: BTreeMap<String, usize>,
    producers: Vec<Option<usize>>,
}

impl TensorGraph {
    pub fn new(name: &str, tensors: Vec<TensorSpec>, ops: Vec<OpNode>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, t) in tensors.iter().enumerate() {
            if index.insert(t.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(t.id.clone()));
            }
        }
        let mut op_ids = BTreeMap::new();
        for (i, op) in ops.iter().enumerate() {
            if op_ids.insert(op.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(op.id.clone()));
            }
            for input in &op.inputs {
                if !index.contains_key(input) {
                    return Err(Error::UnknownTensor(input.clone()));
                }
            }
            if !index.contains_key(&op.output) {
                return Err(Error::UnknownTensor(op.output.clone()));
            }
        }
        let mut producers = vec![None; tensors.len()];
        for (i, op) in ops.iter().enumerate() {
            let ti = index[&op.output];
            // Keep the first producer; a second one is a validation finding,
            // not a construction error.
            if producers[ti].is_none() {
                producers[ti] = Some(i);
            }
        }
        Ok(TensorGraph {
            name: name.to_string(),
            tensors,
            ops,
            index,
            producers,
        })
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn tensor(&self, id: &str) -> Option<&TensorSpec> {
        self.index.get(id).map(|&i| &self.tensors[i])
    }

    pub fn tensor_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Index of the op producing tensor `ti`, if any.
    pub fn producer_of(&self, ti: usize) -> Option<usize> {
        self.producers.get(ti).copied().flatten()
    }

    pub fn op_index(&self, id: &str) -> Option<usize> {
        self.ops.iter().position(|op| op.id == id)
    }
}

// ---------------------------------------------------------------------------
// JSON serialisation
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GraphFileRef<'a> {
    name: &'a str,
    tensors: &'a [TensorSpec],
    ops: &'a [OpNode],
}

#[derive(Deserialize)]
struct GraphFile {
    name: String,
    tensors: Vec<TensorSpec>,
    ops: Vec<OpNode>,
}

/// Canonical JSON for a graph. Stable: serialising the same graph twice
/// yields identical bytes.
pub fn graph_to_json(g: &TensorGraph) -> String {
    let file = GraphFileRef {
        name: &g.name,
        tensors: &g.tensors,
        ops: &g.ops,
    };
    serde_json::to_string_pretty(&file).expect("graph serialisation cannot fail")
}

/// Parse a graph from JSON, checking referential integrity but not graph
/// semantics (see [`load_graph`] for the validating entry point).
pub fn graph_from_json(s: &str) -> Result<TensorGraph> {
    let file: GraphFile = serde_json::from_str(s)?;
    TensorGraph::new(&file.name, file.tensors, file.ops)
}

pub fn save_graph(g: &TensorGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, graph_to_json(g))?;
    Ok(())
}

/// Load and fully validate a graph file.
pub fn load_graph(path: impl AsRef<Path>) -> Result<TensorGraph> {
    let text = std::fs::read_to_string(path)?;
    let g = graph_from_json(&text)?;
    let violations = validate_graph(&g);
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(Error::InvalidGraph(violations))
    }
}

// ---------------------------------------------------------------------------
// Window geometry
// ---------------------------------------------------------------------------

/// Resolved geometry for a windowed op, in elements.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowGeom {
    pub batch: u64,
    pub ih: u64,
    pub iw: u64,
    pub id: u64,
    pub oh: u64,
    pub ow: u64,
    pub od: u64,
    pub kh: u64,
    pub kw: u64,
    /// Third kernel dimension: input channels (conv2d), channel multiplier
    /// (depthwise) or 1 (pooling).
    pub kc: u64,
    pub sh: u64,
    pub sw: u64,
    pub dh: u64,
    pub dw: u64,
    pub ph: u64,
    pub pw: u64,
    /// Element size of the op's dtype in bytes.
    pub ts: u64,
}

fn split_bhwc(shape: &[u64]) -> Option<(u64, u64, u64, u64)> {
    match shape {
        [h, w, c] => Some((1, *h, *w, *c)),
        [b, h, w, c] => Some((*b, *h, *w, *c)),
        _ => None,
    }
}

/// Leading (top, left) zero-padding implied by the op's padding mode.
pub fn derive_padding(g: &TensorGraph, op_idx: usize) -> Result<(u64, u64)> {
    let geom = window_geom(g, op_idx)?;
    Ok((geom.ph, geom.pw))
}

fn begin_pad(i: u64, o: u64, k: u64, s: u64, d: u64) -> u64 {
    let total = ((o - 1) * s + (k - 1) * d + 1).saturating_sub(i);
    total / 2
}

pub(crate) fn window_geom(g: &TensorGraph, op_idx: usize) -> Result<WindowGeom> {
    let op = &g.ops[op_idx];
    if !op.kind.is_windowed() {
        return Err(Error::op(&op.id, "not a windowed op"));
    }
    let input = op
        .inputs
        .first()
        .and_then(|id| g.tensor(id))
        .ok_or_else(|| Error::op(&op.id, "missing input tensor"))?;
    let output = g
        .tensor(&op.output)
        .ok_or_else(|| Error::op(&op.id, "missing output tensor"))?;
    let (ib, ih, iw, id) = split_bhwc(&input.shape)
        .ok_or_else(|| Error::op(&op.id, "windowed input must be 3-D or 4-D"))?;
    let (ob, oh, ow, od) = split_bhwc(&output.shape)
        .ok_or_else(|| Error::op(&op.id, "windowed output must be 3-D or 4-D"))?;
    if ib != ob {
        return Err(Error::op(&op.id, "batch mismatch between input and output"));
    }
    let p = &op.params;
    let (ph, pw) = match p.padding {
        Padding::Valid => (0, 0),
        Padding::Same => (
            begin_pad(ih, oh, p.kernel[0], p.stride[0], p.dilation[0]),
            begin_pad(iw, ow, p.kernel[1], p.stride[1], p.dilation[1]),
        ),
    };
    Ok(WindowGeom {
        batch: ib,
        ih,
        iw,
        id,
        oh,
        ow,
        od,
        kh: p.kernel[0],
        kw: p.kernel[1],
        kc: p.kernel[2],
        sh: p.stride[0],
        sw: p.stride[1],
        dh: p.dilation[0],
        dw: p.dilation[1],
        ph,
        pw,
        ts: input.dtype.size_bytes(),
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

fn expected_extent(i: u64, k: u64, s: u64, d: u64, padding: Padding) -> Option<u64> {
    let window = (k - 1) * d + 1;
    match padding {
        Padding::Same => Some(i.div_ceil(s)),
        Padding::Valid => {
            if window > i {
                None
            } else {
                Some((i - window) / s + 1)
            }
        }
    }
}

fn check_windowed(g: &TensorGraph, op: &OpNode, out: &mut Vec<Violation>) {
    let input = g.tensor(&op.inputs[0]).unwrap();
    let output = g.tensor(&op.output).unwrap();
    let (Some((ib, ih, iw, id)), Some((ob, oh, ow, od))) =
        (split_bhwc(&input.shape), split_bhwc(&output.shape))
    else {
        out.push(violation(
            Some(&op.id),
            None,
            "windowed ops need 3-D or 4-D input and output shapes",
        ));
        return;
    };
    if ib != ob {
        out.push(violation(Some(&op.id), None, "batch mismatch"));
    }
    let p = &op.params;
    if p.kernel[0] == 0 || p.kernel[1] == 0 || p.kernel[2] == 0 {
        out.push(violation(Some(&op.id), None, "kernel dims must be >= 1"));
        return;
    }
    if p.stride.contains(&0) || p.dilation.contains(&0) {
        out.push(violation(
            Some(&op.id),
            None,
            "stride and dilation must be >= 1",
        ));
        return;
    }
    for (axis, i, o, k, s, d) in [
        ("height", ih, oh, p.kernel[0], p.stride[0], p.dilation[0]),
        ("width", iw, ow, p.kernel[1], p.stride[1], p.dilation[1]),
    ] {
        match expected_extent(i, k, s, d, p.padding) {
            Some(expect) if expect == o => {}
            Some(expect) => out.push(violation(
                Some(&op.id),
                None,
                format!("output {axis} is {o}, expected {expect}"),
            )),
            None => out.push(violation(
                Some(&op.id),
                None,
                format!("window does not fit the input along {axis}"),
            )),
        }
    }
    match op.kind {
        OpKind::Conv2d => {
            if p.kernel[2] != id {
                out.push(violation(
                    Some(&op.id),
                    None,
                    format!("kernel depth {} must equal input channels {id}", p.kernel[2]),
                ));
            }
        }
        OpKind::DepthwiseConv2d => {
            if od != id * p.kernel[2] {
                out.push(violation(
                    Some(&op.id),
                    None,
                    format!(
                        "output channels {od} must equal input channels {id} x multiplier {}",
                        p.kernel[2]
                    ),
                ));
            }
        }
        OpKind::AvgPool | OpKind::MaxPool => {
            if od != id {
                out.push(violation(
                    Some(&op.id),
                    None,
                    format!("pooling must preserve channels ({id} in, {od} out)"),
                ));
            }
        }
        _ => unreachable!(),
    }
}

/// Semantic validation: producer discipline, acyclicity and per-op shape and
/// dtype rules. Returns an empty vec for a well-formed graph.
pub fn validate_graph(g: &TensorGraph) -> Vec<Violation> {
    let mut out = Vec::new();

    // Producer discipline.
    let mut producers: Vec<Vec<usize>> = vec![Vec::new(); g.tensors.len()];
    for (i, op) in g.ops.iter().enumerate() {
        producers[g.index[&op.output]].push(i);
    }
    for (ti, t) in g.tensors.iter().enumerate() {
        match t.kind {
            TensorKind::Input | TensorKind::Constant => {
                for &oi in &producers[ti] {
                    out.push(violation(
                        Some(&g.ops[oi].id),
                        Some(&t.id),
                        format!("writes to {} tensor", if t.kind == TensorKind::Input { "an input" } else { "a constant" }),
                    ));
                }
            }
            TensorKind::Intermediate | TensorKind::Output => match producers[ti].len() {
                0 => out.push(violation(None, Some(&t.id), "has no producer")),
                1 => {}
                _ => {
                    for &oi in &producers[ti][1..] {
                        out.push(violation(
                            Some(&g.ops[oi].id),
                            Some(&t.id),
                            "second producer for tensor",
                        ));
                    }
                }
            },
        }
    }

    // Acyclicity via Kahn's algorithm over op dependencies.
    {
        let mut pending: Vec<usize> = g
            .ops
            .iter()
            .map(|op| {
                op.inputs
                    .iter()
                    .filter(|id| {
                        let ti = g.index[id.as_str()];
                        // An input produced by some op must wait for it.
                        !producers[ti].is_empty()
                    })
                    .count()
            })
            .collect();
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); g.tensors.len()];
        for (i, op) in g.ops.iter().enumerate() {
            for id in &op.inputs {
                consumers[g.index[id.as_str()]].push(i);
            }
        }
        let mut queue: Vec<usize> = (0..g.ops.len()).filter(|&i| pending[i] == 0).collect();
        let mut done = 0usize;
        let mut head = 0usize;
        while head < queue.len() {
            let oi = queue[head];
            head += 1;
            done += 1;
            let ti = g.index[&g.ops[oi].output];
            // Only the first producer releases consumers; duplicates were
            // already reported above.
            if producers[ti].first() == Some(&oi) {
                for &ci in &consumers[ti] {
                    pending[ci] -= 1;
                    if pending[ci] == 0 {
                        queue.push(ci);
                    }
                }
            }
        }
        if done != g.ops.len() {
            let stuck = (0..g.ops.len())
                .find(|&i| pending[i] > 0)
                .map(|i| g.ops[i].id.clone());
            out.push(violation(
                stuck.as_deref(),
                None,
                "dependency cycle in the graph",
            ));
        }
    }

    // Per-op rules.
    for op in &g.ops {
        let arity_ok = match op.kind {
            OpKind::ElementwiseBinary => op.inputs.len() == 2,
            OpKind::Concat => !op.inputs.is_empty(),
            _ => op.inputs.len() == 1,
        };
        if !arity_ok {
            out.push(violation(
                Some(&op.id),
                None,
                format!("wrong number of inputs ({})", op.inputs.len()),
            ));
            continue;
        }
        let output = g.tensor(&op.output).unwrap();
        let dtype_ok = op
            .inputs
            .iter()
            .all(|id| g.tensor(id).unwrap().dtype == output.dtype);
        if !dtype_ok {
            out.push(violation(Some(&op.id), None, "mixed dtypes"));
        }
        match op.kind {
            OpKind::ElementwiseUnary | OpKind::Softmax => {
                let input = g.tensor(&op.inputs[0]).unwrap();
                if input.shape != output.shape {
                    out.push(violation(Some(&op.id), None, "shape mismatch"));
                }
            }
            OpKind::ElementwiseBinary => {
                for id in &op.inputs {
                    if g.tensor(id).unwrap().shape != output.shape {
                        out.push(violation(Some(&op.id), None, "shape mismatch"));
                        break;
                    }
                }
            }
            OpKind::Reshape => {
                let input = g.tensor(&op.inputs[0]).unwrap();
                if input.elements() != output.elements() {
                    out.push(violation(
                        Some(&op.id),
                        None,
                        "reshape must preserve the element count",
                    ));
                }
            }
            OpKind::Concat => {
                let total: u64 = op
                    .inputs
                    .iter()
                    .map(|id| g.tensor(id).unwrap().elements())
                    .sum();
                if total != output.elements() {
                    out.push(violation(
                        Some(&op.id),
                        None,
                        format!(
                            "concatenated inputs hold {total} elements, output holds {}",
                            output.elements()
                        ),
                    ));
                }
            }
            OpKind::FullyConnected => {}
            _ => check_windowed(g, op, &mut out),
        }
    }

    out
}

// ---------------------------------------------------------------------------
// Execution order
// ---------------------------------------------------------------------------

/// How to linearise the graph into an op execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Run every op as soon as its inputs exist (FIFO over the ready set,
    /// seeded and extended in declaration order).
    Eager,
    /// Demand-driven: depth-first postorder walk from the graph outputs.
    Lazy,
    /// Take the declaration order as-is; it must already be topological.
    FileOrder,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eager" => Ok(Strategy::Eager),
            "lazy" => Ok(Strategy::Lazy),
            "file-order" | "file_order" => Ok(Strategy::FileOrder),
            other => Err(Error::Parse(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Eager => "eager",
            Strategy::Lazy => "lazy",
            Strategy::FileOrder => "file_order",
        };
        f.write_str(s)
    }
}

fn tensor_available_at_start(t: &TensorSpec) -> bool {
    matches!(t.kind, TensorKind::Input | TensorKind::Constant)
}

/// Linearise `g` into an execution order (op indices).
pub fn serialise(g: &TensorGraph, strategy: Strategy) -> Result<Vec<usize>> {
    match strategy {
        Strategy::FileOrder => {
            let order: Vec<usize> = (0..g.ops.len()).collect();
            check_topological(g, &order)?;
            Ok(order)
        }
        Strategy::Eager => {
            let mut available: Vec<bool> = g
                .tensors
                .iter()
                .map(tensor_available_at_start)
                .collect();
            let mut pending: Vec<usize> = g
                .ops
                .iter()
                .map(|op| {
                    op.inputs
                        .iter()
                        .filter(|id| !available[g.index[id.as_str()]])
                        .count()
                })
                .collect();
            let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); g.tensors.len()];
            for (i, op) in g.ops.iter().enumerate() {
                for id in &op.inputs {
                    consumers[g.index[id.as_str()]].push(i);
                }
            }
            let mut queue: std::collections::VecDeque<usize> =
                (0..g.ops.len()).filter(|&i| pending[i] == 0).collect();
            let mut order = Vec::with_capacity(g.ops.len());
            let mut emitted = vec![false; g.ops.len()];
            while let Some(oi) = queue.pop_front() {
                if emitted[oi] {
                    continue;
                }
                emitted[oi] = true;
                order.push(oi);
                let ti = g.index[&g.ops[oi].output];
                if !available[ti] {
                    available[ti] = true;
                    for &ci in &consumers[ti] {
                        pending[ci] -= 1;
                        if pending[ci] == 0 {
                            queue.push_back(ci);
                        }
                    }
                }
            }
            if order.len() != g.ops.len() {
                return Err(Error::BadOrder(
                    "graph has a cycle; no eager order exists".into(),
                ));
            }
            Ok(order)
        }
        Strategy::Lazy => {
            let mut order = Vec::with_capacity(g.ops.len());
            let mut state = vec![0u8; g.ops.len()]; // 0 unseen, 1 visiting, 2 done
            let mut roots: Vec<usize> = g
                .tensors
                .iter()
                .enumerate()
                .filter(|(_, t)| t.kind == TensorKind::Output)
                .filter_map(|(ti, _)| g.producer_of(ti))
                .collect();
            // Any op unreachable from an output still has to run; append such
            // roots in declaration order.
            roots.extend(0..g.ops.len());
            for root in roots {
                visit_lazy(g, root, &mut state, &mut order)?;
            }
            Ok(order)
        }
    }
}

fn visit_lazy(
    g: &TensorGraph,
    oi: usize,
    state: &mut [u8],
    order: &mut Vec<usize>,
) -> Result<()> {
    match state[oi] {
        2 => return Ok(()),
        1 => {
            return Err(Error::BadOrder(format!(
                "dependency cycle through op `{}`",
                g.ops[oi].id
            )))
        }
        _ => {}
    }
    state[oi] = 1;
    for input in &g.ops[oi].inputs {
        let ti = g.index[input.as_str()];
        if let Some(producer) = g.producer_of(ti) {
            visit_lazy(g, producer, state, order)?;
        }
    }
    state[oi] = 2;
    order.push(oi);
    Ok(())
}

fn check_topological(g: &TensorGraph, order: &[usize]) -> Result<()> {
    if order.len() != g.ops.len() {
        return Err(Error::BadOrder(format!(
            "order has {} entries for {} ops",
            order.len(),
            g.ops.len()
        )));
    }
    let mut seen = vec![false; g.ops.len()];
    let mut available: Vec<bool> = g.tensors.iter().map(tensor_available_at_start).collect();
    for &oi in order {
        if oi >= g.ops.len() || seen[oi] {
            return Err(Error::BadOrder(format!(
                "order is not a permutation (op index {oi})"
            )));
        }
        seen[oi] = true;
        let op = &g.ops[oi];
        for input in &op.inputs {
            if !available[g.index[input.as_str()]] {
                return Err(Error::BadOrder(format!(
                    "op `{}` runs before its input `{input}` is produced",
                    op.id
                )));
            }
        }
        available[g.index[&op.output]] = true;
    }
    Ok(())
}

/// Per-tensor lifetime data for one execution order.
///
/// Positions are indices into the order. Graph inputs and constants get
/// `first_use == -1` (alive before step 0); graph outputs get
/// `last_use == i64::MAX` (alive forever).
#[derive(Debug, Clone)]
pub struct ScopeTable {
    pub first_use: Vec<i64>,
    pub last_use: Vec<i64>,
    /// Number of op input slots reading each tensor.
    pub consumer_count: Vec<u32>,
}

impl ScopeTable {
    /// Closed-interval lifetime overlap test.
    pub fn conflict(&self, a: usize, b: usize) -> bool {
        self.first_use[a] <= self.last_use[b] && self.first_use[b] <= self.last_use[a]
    }
}

/// Compute tensor lifetimes under `order`, validating the order on the way.
pub fn compute_scopes(g: &TensorGraph, order: &[usize]) -> Result<ScopeTable> {
    check_topological(g, order)?;
    let n = g.tensors.len();
    let mut first_use = vec![i64::MAX; n];
    let mut last_use = vec![i64::MIN; n];
    let mut consumer_count = vec![0u32; n];
    for (ti, t) in g.tensors.iter().enumerate() {
        if tensor_available_at_start(t) {
            first_use[ti] = -1;
            last_use[ti] = -1;
        }
    }
    for (pos, &oi) in order.iter().enumerate() {
        let pos = pos as i64;
        let op = &g.ops[oi];
        for input in &op.inputs {
            let ti = g.index[input.as_str()];
            last_use[ti] = last_use[ti].max(pos);
            consumer_count[ti] += 1;
        }
        let out = g.index[&op.output];
        if first_use[out] == i64::MAX {
            first_use[out] = pos;
        }
        last_use[out] = last_use[out].max(pos);
    }
    for (ti, t) in g.tensors.iter().enumerate() {
        if t.kind == TensorKind::Output {
            last_use[ti] = i64::MAX;
        }
    }
    Ok(ScopeTable {
        first_use,
        last_use,
        consumer_count,
    })
}
