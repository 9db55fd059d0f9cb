//! MAD of untrained teachers of growing depth on a geometric graph and on
//! the complete graph.

use stkd::data::{generate_synthetic, Normalizer, SyntheticConfig};
use stkd::eval::oversmoothing_study;
use stkd::graph::Graph;
use stkd::tensor::Tensor;

fn main() -> stkd::Result<()> {
    let n = 60;
    let graph = Graph::erdos_renyi_geometric(n, 0.3, 42)?;
    let series = generate_synthetic(&graph, &SyntheticConfig { n_steps: 300, ..Default::default() })?;
    let tail = &series.values()[(300 - 12) * n..];
    let norm = Normalizer::fit(tail)?;
    let window = Tensor::new(&[12, n, 1], tail.iter().map(|v| norm.apply(*v)).collect())?;

    let depths = [0, 1, 2, 4, 8, 16];
    let geo = oversmoothing_study(&depths, &graph, 42, &window, 64)?;
    let full = oversmoothing_study(&depths, &Graph::complete(n), 42, &window, 64)?;
    println!("{} component(s)", graph.connected_components());
    println!("{:>5} {:>10} {:>10}", "depth", "geometric", "complete");
    for (g, c) in geo.iter().zip(&full) {
        println!("{:>5} {:>10.4} {:>10.4}", g.depth, g.mad, c.mad);
    }
    Ok(())
}
