//! Synthetic traffic on a geometric graph: windows, splits, normalization and
//! the CSV formats read by the `csv` data source.

use stkd::data::{
    generate_synthetic, load_readings_csv, write_readings_csv, Split, SplitFractions,
    SyntheticConfig, WindowedDataset,
};
use stkd::graph::Graph;

fn main() -> stkd::Result<()> {
    let graph = Graph::erdos_renyi_geometric(20, 0.35, 1)?;
    let series = generate_synthetic(&graph, &SyntheticConfig { n_steps: 864, ..Default::default() })?;
    println!(
        "{} steps × {} nodes, {} steps per day, lag-1 autocorrelation of node 0: {:.3}",
        series.n_steps(),
        series.n_nodes(),
        series.steps_per_day(),
        series.autocorrelation(0, 1)
    );

    let ds = WindowedDataset::new(series.clone(), 12, 3, SplitFractions::default())?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split:?}: windows {:?}", ds.windows(split));
    }
    let (normalized, norm) = ds.normalized()?;
    println!("normalizer mean {:.2}, std {:.2}", norm.mean, norm.std);
    println!("first normalized target row: {:?}", &normalized.target(0)[..5]);

    let dir = std::env::temp_dir().join("stkd-synthetic-example");
    std::fs::create_dir_all(&dir).map_err(|e| stkd::Error::Io { path: dir.clone(), source: e })?;
    graph.write_edge_csv(dir.join("graph.csv"))?;
    write_readings_csv(&series, dir.join("readings.csv"))?;
    let back = load_readings_csv(dir.join("readings.csv"))?;
    println!(
        "wrote {}; reloaded {} steps, {} cells filled",
        dir.display(),
        back.series.n_steps(),
        back.filled
    );
    Ok(())
}
