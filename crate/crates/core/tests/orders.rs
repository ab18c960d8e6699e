//! Serialisation strategies and scope computation.

mod common;

use common::*;
use dmo_core::*;

#[test]
fn diamond_orders() {
    let g = diamond_graph(false);
    let eager = serialise(&g, Strategy::Eager).unwrap();
    assert_eq!(order_ids(&g, &eager), ["a", "b", "c", "d"]);
    let lazy = serialise(&g, Strategy::Lazy).unwrap();
    assert_eq!(order_ids(&g, &lazy), ["a", "b", "c", "d"]);

    // Lazy visits the join's inputs in declared order, so flipping them
    // flips the middle of the schedule.
    let flipped = diamond_graph(true);
    let lazy2 = serialise(&flipped, Strategy::Lazy).unwrap();
    assert_eq!(order_ids(&flipped, &lazy2), ["a", "c", "b", "d"]);
}

#[test]
fn independent_chains_interleave_only_under_eager() {
    let g = two_chain_graph();
    let eager = serialise(&g, Strategy::Eager).unwrap();
    assert_eq!(order_ids(&g, &eager), ["a1", "b1", "a2", "b2", "join"]);
    let lazy = serialise(&g, Strategy::Lazy).unwrap();
    assert_eq!(order_ids(&g, &lazy), ["a1", "a2", "b1", "b2", "join"]);
    let file = serialise(&g, Strategy::FileOrder).unwrap();
    assert_eq!(order_ids(&g, &file), ["a1", "b1", "a2", "b2", "join"]);
}

#[test]
fn sequential_graphs_have_a_single_order() {
    let g = tiny_chain();
    let eager = serialise(&g, Strategy::Eager).unwrap();
    let lazy = serialise(&g, Strategy::Lazy).unwrap();
    let file = serialise(&g, Strategy::FileOrder).unwrap();
    assert_eq!(eager, lazy);
    assert_eq!(eager, file);
}

#[test]
fn every_order_is_topological() {
    for g in [diamond_graph(true), two_chain_graph(), tiny_chain()] {
        for s in [Strategy::Eager, Strategy::Lazy, Strategy::FileOrder] {
            let order = serialise(&g, s).unwrap();
            let mut pos = vec![usize::MAX; g.ops.len()];
            for (p, &o) in order.iter().enumerate() {
                pos[o] = p;
            }
            for (oi, op) in g.ops.iter().enumerate() {
                for input in &op.inputs {
                    let ti = g.tensor_index(input).unwrap();
                    if let Some(prod) = g.producer_of(ti) {
                        assert!(pos[prod] < pos[oi], "{s:?}: producer precedes consumer");
                    }
                }
            }
        }
    }
}

#[test]
fn chain_scopes() {
    let g = tiny_chain();
    let order = serialise(&g, Strategy::FileOrder).unwrap();
    let scopes = compute_scopes(&g, &order).unwrap();
    let t = |id: &str| g.tensor_index(id).unwrap();
    // Graph inputs are live from before the first op.
    assert_eq!(scopes.first_use[t("t0")], -1);
    assert_eq!(scopes.last_use[t("t0")], 0);
    assert_eq!(scopes.first_use[t("t1")], 0);
    assert_eq!(scopes.last_use[t("t1")], 1);
    // Graph outputs stay live to the end.
    assert_eq!(scopes.first_use[t("t2")], 1);
    assert_eq!(scopes.last_use[t("t2")], i64::MAX);
    assert_eq!(scopes.consumer_count[t("t1")], 1);
    assert_eq!(scopes.consumer_count[t("t2")], 0);
}

#[test]
fn multi_consumer_scope_extends_to_last_reader() {
    let g = diamond_graph(false);
    let order = serialise(&g, Strategy::Eager).unwrap(); // a, b, c, d
    let scopes = compute_scopes(&g, &order).unwrap();
    let t1 = g.tensor_index("t1").unwrap();
    assert_eq!(scopes.consumer_count[t1], 2);
    assert_eq!(scopes.first_use[t1], 0);
    assert_eq!(scopes.last_use[t1], 2, "read by b (pos 1) and c (pos 2)");
}

#[test]
fn non_topological_order_is_rejected() {
    let g = tiny_chain();
    assert!(matches!(
        compute_scopes(&g, &[1, 0]),
        Err(Error::BadOrder(_))
    ));
    // Orders must also be complete permutations.
    assert!(compute_scopes(&g, &[0]).is_err());
    assert!(compute_scopes(&g, &[0, 0]).is_err());
}

#[test]
fn consumer_count_is_declaration_order_invariant() {
    let a = diamond_graph(false);
    let b = diamond_graph(true);
    let oa = serialise(&a, Strategy::Eager).unwrap();
    let ob = serialise(&b, Strategy::Lazy).unwrap();
    let sa = compute_scopes(&a, &oa).unwrap();
    let sb = compute_scopes(&b, &ob).unwrap();
    for id in ["t0", "t1", "t2", "t3", "t4"] {
        assert_eq!(
            sa.consumer_count[a.tensor_index(id).unwrap()],
            sb.consumer_count[b.tensor_index(id).unwrap()],
            "{id}"
        );
    }
}

#[test]
fn strategy_parsing() {
    assert_eq!("eager".parse::<Strategy>().unwrap(), Strategy::Eager);
    assert_eq!("lazy".parse::<Strategy>().unwrap(), Strategy::Lazy);
    assert_eq!("file-order".parse::<Strategy>().unwrap(), Strategy::FileOrder);
    assert_eq!("file_order".parse::<Strategy>().unwrap(), Strategy::FileOrder);
    assert!("random".parse::<Strategy>().is_err());
}
