//! Geometric graph, symmetric normalization and repeated sparse propagation.

use stkd::graph::Graph;
use stkd::tensor::{Tape, Tensor};

fn main() -> stkd::Result<()> {
    let graph = Graph::erdos_renyi_geometric(50, 0.3, 7)?;
    let adj = graph.symmetric_normalize();
    println!(
        "{} nodes, {} edges, {} component(s), {} stored entries, spectral radius {:.6}",
        graph.n_nodes(),
        graph.edges().len(),
        graph.connected_components(),
        adj.nnz(),
        adj.spectral_radius(200)
    );

    // One-hot features spread out and flatten under repeated Â·X.
    let mut tape = Tape::new();
    let mut x = tape.constant(Tensor::eye(50));
    for step in 1..=16u32 {
        x = adj.spmm(&mut tape, x)?;
        if step.is_power_of_two() {
            let v = tape.value(x);
            let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), &y| (l.min(y), h.max(y)));
            println!("after {step:>2} hops: entries in [{lo:.4}, {hi:.4}]");
        }
    }
    Ok(())
}
