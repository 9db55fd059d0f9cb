mod common;

use stkd::distill::mad_metric;
use stkd::eval::oversmoothing_study;
use stkd::graph::Graph;
use stkd::tensor::Tensor;

#[test]
fn mad_is_non_increasing_in_depth_on_most_seeds() {
    let mut monotone = 0;
    for seed in 100..120u64 {
        let g = common::connected_geometric(40, seed);
        let w = common::window_on(&g, 12, seed);
        let rows = oversmoothing_study(&[1, 2, 4, 8], &g, seed, &w, 32).unwrap();
        if rows.windows(2).all(|p| p[1].mad <= p[0].mad) {
            monotone += 1;
        }
    }
    assert!(monotone >= 18, "monotone on {monotone}/20 seeds");
}

#[test]
fn depth_zero_is_the_input_baseline() {
    let g = common::connected_geometric(30, 42);
    let w = common::window_on(&g, 12, 42);
    let rows = oversmoothing_study(&[0, 2, 8], &g, 42, &w, 32).unwrap();
    let (n, t) = (30, 12);
    let mut node_rows = vec![0.0; n * t];
    for s in 0..t {
        for i in 0..n {
            node_rows[i * t + s] = w.data()[s * n + i];
        }
    }
    let baseline = mad_metric(&Tensor::new(&[n, t], node_rows).unwrap()).unwrap();
    assert_eq!(rows[0].mad, baseline.value);
    assert!(rows[2].mad < rows[1].mad);
}

#[test]
fn complete_graph_collapses_quickly() {
    let g = Graph::complete(25);
    let w = common::window_on(&common::connected_geometric(25, 1), 12, 1);
    let rows = oversmoothing_study(&[1, 4], &g, 1, &w, 64).unwrap();
    assert!(rows[1].mad <= 0.05, "{rows:?}");
}

#[test]
fn depths_must_ascend() {
    let g = Graph::ring(8);
    let w = common::window_on(&g, 12, 0);
    assert!(oversmoothing_study(&[2, 1], &g, 0, &w, 8).is_err());
    assert!(oversmoothing_study(&[2, 2], &g, 0, &w, 8).is_err());
}
