//! Property net over randomly generated ops, chains, and plans.
//!
//! The load-bearing invariants:
//!   * the reverse-scan bound equals the trace-replay bound on windowed ops,
//!   * the closed form never exceeds the exact bound,
//!   * the exact bound is maximal: placements at the bound replay clean and
//!     placements one byte past it clobber,
//!   * planners produce valid, clobber-free plans, and the overlap plan never
//!     loses to the baseline.

mod common;

use common::*;
use dmo_core::Strategy;
use dmo_core::*;
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

#[derive(Debug, Clone)]
struct WindowedCase {
    kind: OpKind,
    in_shape: [u64; 3],
    out_shape: [u64; 3],
    kernel: [u64; 3],
    stride: [u64; 2],
    dilation: [u64; 2],
    padding: Padding,
    dtype: DType,
}

fn out_extent(i: u64, k: u64, s: u64, d: u64, padding: Padding) -> Option<u64> {
    let window = (k - 1) * d + 1;
    match padding {
        Padding::Valid => {
            if window > i {
                None
            } else {
                Some((i - window) / s + 1)
            }
        }
        Padding::Same => Some(i.div_ceil(s)),
    }
}

fn windowed_case() -> impl proptest::strategy::Strategy<Value = WindowedCase> {
    (
        prop_oneof![
            Just(OpKind::Conv2d),
            Just(OpKind::DepthwiseConv2d),
            Just(OpKind::AvgPool),
            Just(OpKind::MaxPool),
        ],
        (3u64..11, 3u64..11, 1u64..5),
        (1u64..4, 1u64..4),
        (1u64..3, 1u64..3),
        (1u64..3, 1u64..3),
        prop_oneof![Just(Padding::Valid), Just(Padding::Same)],
        prop_oneof![Just(DType::U8), Just(DType::F32)],
        1u64..5,  // conv2d output depth
        1u64..3,  // depthwise channel multiplier
    )
        .prop_filter_map(
            "window must fit",
            |(kind, (ih, iw, id), (kh, kw), (sh, sw), (dh, dw), padding, dtype, od, kc)| {
                let kh = kh.min(ih);
                let kw = kw.min(iw);
                let oh = out_extent(ih, kh, sh, dh, padding)?;
                let ow = out_extent(iw, kw, sw, dw, padding)?;
                let (kernel, out_d) = match kind {
                    OpKind::Conv2d => ([kh, kw, id], od),
                    OpKind::DepthwiseConv2d => ([kh, kw, kc], id * kc),
                    _ => ([kh, kw, 1], id),
                };
                Some(WindowedCase {
                    kind,
                    in_shape: [ih, iw, id],
                    out_shape: [oh, ow, out_d],
                    kernel,
                    stride: [sh, sw],
                    dilation: [dh, dw],
                    padding,
                    dtype,
                })
            },
        )
}

fn build(case: &WindowedCase) -> TensorGraph {
    windowed_graph(
        case.kind,
        case.in_shape,
        case.out_shape,
        case.kernel,
        case.stride,
        case.dilation,
        case.padding,
        case.dtype,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reverse_scan_matches_trace_replay(case in windowed_case()) {
        let g = build(&case);
        let trace = os_from_trace_streamed(&g, 0).unwrap().o_s;
        let alg = os_algorithmic(&g, 0).unwrap().o_s;
        prop_assert_eq!(alg, trace, "case: {:?}", case);
    }

    #[test]
    fn closed_form_never_exceeds_exact(case in windowed_case()) {
        let g = build(&case);
        let exact = os_algorithmic(&g, 0).unwrap().o_s;
        let analytic = os_analytic(&g, 0).unwrap().o_s;
        let ob = g.tensor("t_out").unwrap().size_bytes();
        prop_assert!(analytic <= exact, "case: {:?}", case);
        prop_assert!(exact <= ob);
    }

    #[test]
    fn exact_bound_is_tight_under_replay(case in windowed_case()) {
        let g = build(&case);
        let o_s = os_from_trace_streamed(&g, 0).unwrap().o_s;
        let ob = g.tensor("t_out").unwrap().size_bytes();
        let ib = g.tensor("t_in").unwrap().size_bytes();

        let plan = |in_off: u64| AllocationPlan {
            model: g.name.clone(),
            strategy: "manual".into(),
            order: vec!["op0".into()],
            arena_size: (in_off + ib).max(ob),
            buffers: vec![
                PlannedBuffer { tensor: "t_out".into(), offset: 0, size: ob },
                PlannedBuffer { tensor: "t_in".into(), offset: in_off, size: ib },
            ],
            overlaps: vec![],
        };

        // At the bound: clean.
        let at = validate(&g, &plan(ob - o_s)).unwrap();
        prop_assert_eq!(at, vec![], "bound unsafe for {:?}", case);
        // One byte past the bound: at least one clobber.
        if o_s < ob {
            let past = validate(&g, &plan(ob - o_s - 1)).unwrap();
            prop_assert!(!past.is_empty(), "bound not maximal for {:?}", case);
        }
    }
}

/// Random straight-line chains over shape-preserving and shape-changing ops.
#[derive(Debug, Clone)]
enum Link {
    Relu,
    Depthwise,
    Pointwise(u64),
    Pool,
}

fn chain_graph(links: &[Link], h: u64, w: u64, c: u64, dtype: DType) -> Option<TensorGraph> {
    let mut tensors = vec![TensorSpec {
        id: "t0".into(),
        shape: vec![h, w, c],
        dtype,
        kind: TensorKind::Input,
    }];
    let mut ops = Vec::new();
    let (mut ch, mut cw, mut cc) = (h, w, c);
    for (i, link) in links.iter().enumerate() {
        let (kind, kernel, stride, padding) = match link {
            Link::Relu => (OpKind::ElementwiseUnary, [1, 1, 1], [1, 1], Padding::Valid),
            Link::Depthwise => (OpKind::DepthwiseConv2d, [3, 3, 1], [1, 1], Padding::Same),
            Link::Pointwise(oc) => {
                let k = [1, 1, cc];
                cc = *oc;
                (OpKind::Conv2d, k, [1, 1], Padding::Valid)
            }
            Link::Pool => {
                if ch < 2 || cw < 2 {
                    return None;
                }
                (OpKind::AvgPool, [2, 2, 1], [2, 2], Padding::Valid)
            }
        };
        if matches!(link, Link::Pool) {
            ch = (ch - 2) / 2 + 1;
            cw = (cw - 2) / 2 + 1;
        }
        let last = i == links.len() - 1;
        tensors.push(TensorSpec {
            id: format!("t{}", i + 1),
            shape: vec![ch, cw, cc],
            dtype,
            kind: if last { TensorKind::Output } else { TensorKind::Intermediate },
        });
        ops.push(OpNode {
            id: format!("op{i}"),
            kind,
            inputs: vec![format!("t{i}")],
            output: format!("t{}", i + 1),
            params: OpParams {
                kernel,
                stride,
                dilation: [1, 1],
                padding,
            },
        });
    }
    TensorGraph::new("chain", tensors, ops).ok()
}

fn chain_case() -> impl proptest::strategy::Strategy<Value = TensorGraph> {
    (
        prop::collection::vec(
            prop_oneof![
                Just(Link::Relu),
                Just(Link::Depthwise),
                (1u64..5).prop_map(Link::Pointwise),
                Just(Link::Pool),
            ],
            1..5,
        ),
        (4u64..9, 4u64..9, 1u64..4),
        prop_oneof![Just(DType::U8), Just(DType::F32)],
    )
        .prop_filter_map("pool needs room", |(links, (h, w, c), dtype)| {
            chain_graph(&links, h, w, c, dtype)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn planners_produce_valid_clean_plans(g in chain_case()) {
        let base = plan_baseline(&g, &PlanOptions::default()).unwrap();
        let dmo = plan_dmo(&g, &PlanOptions::default()).unwrap();
        prop_assert_eq!(validate(&g, &base).unwrap(), vec![]);
        prop_assert_eq!(validate(&g, &dmo).unwrap(), vec![]);
        prop_assert!(dmo.arena_size <= base.arena_size,
            "overlap plan lost: {} > {}", dmo.arena_size, base.arena_size);
        // Every placed buffer stays inside the arena.
        for p in base.buffers.iter().chain(dmo.buffers.iter()) {
            prop_assert!(p.offset + p.size <= base.arena_size.max(dmo.arena_size));
        }
    }

    #[test]
    fn execution_orders_are_topological(g in chain_case()) {
        for strategy in [Strategy::Eager, Strategy::Lazy, Strategy::FileOrder] {
            let order = serialise(&g, strategy).unwrap();
            prop_assert_eq!(order.len(), g.ops.len());
            let mut ready: Vec<bool> = g.tensors().iter()
                .map(|t| t.kind != TensorKind::Intermediate && t.kind != TensorKind::Output)
                .collect();
            for &oi in &order {
                let op = &g.ops[oi];
                for input in &op.inputs {
                    prop_assert!(ready[g.tensor_index(input).unwrap()],
                        "op {} ran before its input {}", op.id, input);
                }
                ready[g.tensor_index(&op.output).unwrap()] = true;
            }
        }
    }

    #[test]
    fn graph_json_round_trips(g in chain_case()) {
        let text = graph_to_json(&g);
        let back = graph_from_json(&text).unwrap();
        prop_assert_eq!(graph_to_json(&back), text);
    }

    #[test]
    fn plan_json_round_trips(g in chain_case()) {
        let plan = plan_dmo(&g, &PlanOptions::default()).unwrap();
        let text = plan.to_json_string();
        let back = AllocationPlan::from_json_str(&text).unwrap();
        prop_assert_eq!(back.to_json_string(), text);
    }
}

#[test]
fn reversed_declaration_order_fails_file_order_but_not_lazy() {
    let mut g = tiny_chain();
    g.ops.reverse();
    let g = TensorGraph::new("rev", g.tensors().to_vec(), g.ops).unwrap();
    assert!(matches!(serialise(&g, Strategy::FileOrder), Err(Error::BadOrder(_))));
    let order = serialise(&g, Strategy::Lazy).unwrap();
    assert_eq!(order_ids(&g, &order), vec!["conv", "relu"]);
}
