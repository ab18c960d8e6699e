//! Shared fixture builders for the integration tests.
#![allow(dead_code)]

use dmo_core::*;

/// Single windowed op `t_in -> op -> t_out` with explicit shapes.
///
/// Shapes are `[h, w, d]`; the output shape is given by the caller so that
/// deliberately-inconsistent fixtures can be built for validation tests.
pub fn windowed_graph(
    kind: OpKind,
    in_shape: [u64; 3],
    out_shape: [u64; 3],
    kernel: [u64; 3],
    stride: [u64; 2],
    dilation: [u64; 2],
    padding: Padding,
    dtype: DType,
) -> TensorGraph {
    let tensors = vec![
        TensorSpec {
            id: "t_in".into(),
            shape: in_shape.to_vec(),
            dtype,
            kind: TensorKind::Input,
        },
        TensorSpec {
            id: "t_out".into(),
            shape: out_shape.to_vec(),
            dtype,
            kind: TensorKind::Output,
        },
    ];
    let ops = vec![OpNode {
        id: "op0".into(),
        kind,
        inputs: vec!["t_in".into()],
        output: "t_out".into(),
        params: OpParams {
            kernel,
            stride,
            dilation,
            padding,
        },
    }];
    TensorGraph::new("fixture", tensors, ops).expect("fixture graph must build")
}

/// The reference depthwise op: 112x112x96 -> 3x3 stride-2 same -> 56x56x96.
pub fn reference_depthwise(dtype: DType) -> TensorGraph {
    windowed_graph(
        OpKind::DepthwiseConv2d,
        [112, 112, 96],
        [56, 56, 96],
        [3, 3, 1],
        [2, 2],
        [1, 1],
        Padding::Same,
        dtype,
    )
}

/// Unary elementwise op over a flat tensor of `n` elements.
pub fn relu_graph(n: u64, dtype: DType) -> TensorGraph {
    let tensors = vec![
        TensorSpec {
            id: "t_in".into(),
            shape: vec![n],
            dtype,
            kind: TensorKind::Input,
        },
        TensorSpec {
            id: "t_out".into(),
            shape: vec![n],
            dtype,
            kind: TensorKind::Output,
        },
    ];
    let ops = vec![OpNode {
        id: "relu0".into(),
        kind: OpKind::ElementwiseUnary,
        inputs: vec!["t_in".into()],
        output: "t_out".into(),
        params: OpParams::default(),
    }];
    TensorGraph::new("relu", tensors, ops).expect("relu graph must build")
}

/// Fully-connected op: `k` input elements -> `j` output elements.
pub fn fc_graph(k: u64, j: u64, dtype: DType) -> TensorGraph {
    let tensors = vec![
        TensorSpec {
            id: "t_in".into(),
            shape: vec![k],
            dtype,
            kind: TensorKind::Input,
        },
        TensorSpec {
            id: "t_out".into(),
            shape: vec![j],
            dtype,
            kind: TensorKind::Output,
        },
    ];
    let ops = vec![OpNode {
        id: "fc0".into(),
        kind: OpKind::FullyConnected,
        inputs: vec!["t_in".into()],
        output: "t_out".into(),
        params: OpParams::default(),
    }];
    TensorGraph::new("fc", tensors, ops).expect("fc graph must build")
}

/// Softmax over `n` elements.
pub fn softmax_graph(n: u64, dtype: DType) -> TensorGraph {
    let tensors = vec![
        TensorSpec {
            id: "t_in".into(),
            shape: vec![n],
            dtype,
            kind: TensorKind::Input,
        },
        TensorSpec {
            id: "t_out".into(),
            shape: vec![n],
            dtype,
            kind: TensorKind::Output,
        },
    ];
    let ops = vec![OpNode {
        id: "softmax0".into(),
        kind: OpKind::Softmax,
        inputs: vec!["t_in".into()],
        output: "t_out".into(),
        params: OpParams::default(),
    }];
    TensorGraph::new("softmax", tensors, ops).expect("softmax graph must build")
}

/// Concat of the given input sizes (flat tensors, `kinds[i]` controls
/// constant vs intermediate inputs).
pub fn concat_graph(sizes: &[u64], kinds: &[TensorKind], dtype: DType) -> TensorGraph {
    assert_eq!(sizes.len(), kinds.len());
    let mut tensors = Vec::new();
    let mut inputs = Vec::new();
    for (i, (&n, &kind)) in sizes.iter().zip(kinds).enumerate() {
        let id = format!("t_in{i}");
        tensors.push(TensorSpec {
            id: id.clone(),
            shape: vec![n],
            dtype,
            kind,
        });
        inputs.push(id);
    }
    let total: u64 = sizes.iter().sum();
    tensors.push(TensorSpec {
        id: "t_out".into(),
        shape: vec![total],
        dtype,
        kind: TensorKind::Output,
    });
    let ops = vec![OpNode {
        id: "concat0".into(),
        kind: OpKind::Concat,
        inputs,
        output: "t_out".into(),
        params: OpParams::default(),
    }];
    TensorGraph::new("concat", tensors, ops).expect("concat graph must build")
}

/// Three-op chain used by the tiny planning oracles:
/// t0 (4x4x3 u8, 48 B) -conv 3x3 s2 same-> t1 (2x2x4, 16 B) -relu-> t2 (16 B).
pub fn tiny_chain() -> TensorGraph {
    let tensors = vec![
        TensorSpec {
            id: "t0".into(),
            shape: vec![4, 4, 3],
            dtype: DType::U8,
            kind: TensorKind::Input,
        },
        TensorSpec {
            id: "t1".into(),
            shape: vec![2, 2, 4],
            dtype: DType::U8,
            kind: TensorKind::Intermediate,
        },
        TensorSpec {
            id: "t2".into(),
            shape: vec![2, 2, 4],
            dtype: DType::U8,
            kind: TensorKind::Output,
        },
    ];
    let ops = vec![
        OpNode {
            id: "conv".into(),
            kind: OpKind::Conv2d,
            inputs: vec!["t0".into()],
            output: "t1".into(),
            params: OpParams {
                kernel: [3, 3, 3],
                stride: [2, 2],
                dilation: [1, 1],
                padding: Padding::Same,
            },
        },
        OpNode {
            id: "relu".into(),
            kind: OpKind::ElementwiseUnary,
            inputs: vec!["t1".into()],
            output: "t2".into(),
            params: OpParams::default(),
        },
    ];
    TensorGraph::new("tiny_chain", tensors, ops).expect("tiny chain must build")
}

/// Diamond: a -> (b, c) -> d, with d's declared inputs `(t2, t3)` or flipped.
pub fn diamond_graph(d_inputs_flipped: bool) -> TensorGraph {
    let t = |id: &str, kind: TensorKind| TensorSpec {
        id: id.into(),
        shape: vec![16],
        dtype: DType::F32,
        kind,
    };
    let tensors = vec![
        t("t0", TensorKind::Input),
        t("t1", TensorKind::Intermediate),
        t("t2", TensorKind::Intermediate),
        t("t3", TensorKind::Intermediate),
        t("t4", TensorKind::Output),
    ];
    let unary = |id: &str, input: &str, output: &str| OpNode {
        id: id.into(),
        kind: OpKind::ElementwiseUnary,
        inputs: vec![input.into()],
        output: output.into(),
        params: OpParams::default(),
    };
    let d_inputs = if d_inputs_flipped {
        vec!["t3".to_string(), "t2".to_string()]
    } else {
        vec!["t2".to_string(), "t3".to_string()]
    };
    let ops = vec![
        unary("a", "t0", "t1"),
        unary("b", "t1", "t2"),
        unary("c", "t1", "t3"),
        OpNode {
            id: "d".into(),
            kind: OpKind::ElementwiseBinary,
            inputs: d_inputs,
            output: "t4".into(),
            params: OpParams::default(),
        },
    ];
    TensorGraph::new("diamond", tensors, ops).expect("diamond must build")
}

/// Two independent two-op chains joined by a final binary op.
/// Declared op order: a1, b1, a2, b2, join.
pub fn two_chain_graph() -> TensorGraph {
    let t = |id: &str, kind: TensorKind| TensorSpec {
        id: id.into(),
        shape: vec![8],
        dtype: DType::F32,
        kind,
    };
    let tensors = vec![
        t("t0", TensorKind::Input),
        t("t3", TensorKind::Input),
        t("t1", TensorKind::Intermediate),
        t("t2", TensorKind::Intermediate),
        t("t4", TensorKind::Intermediate),
        t("t5", TensorKind::Intermediate),
        t("t6", TensorKind::Output),
    ];
    let unary = |id: &str, input: &str, output: &str| OpNode {
        id: id.into(),
        kind: OpKind::ElementwiseUnary,
        inputs: vec![input.into()],
        output: output.into(),
        params: OpParams::default(),
    };
    let ops = vec![
        unary("a1", "t0", "t1"),
        unary("b1", "t3", "t4"),
        unary("a2", "t1", "t2"),
        unary("b2", "t4", "t5"),
        OpNode {
            id: "join".into(),
            kind: OpKind::ElementwiseBinary,
            inputs: vec!["t2".into(), "t5".into()],
            output: "t6".into(),
            params: OpParams::default(),
        },
    ];
    TensorGraph::new("two_chain", tensors, ops).expect("two-chain must build")
}

/// Execution order of op ids for readability in assertions.
pub fn order_ids(g: &TensorGraph, order: &[usize]) -> Vec<String> {
    order.iter().map(|&i| g.ops[i].id.clone()).collect()
}
