#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stkd::config::RunConfig;
use stkd::data::{generate_synthetic, Normalizer, SyntheticConfig};
use stkd::graph::Graph;
use stkd::tensor::Tensor;

/// A run small enough for a full pipeline in a few seconds.
pub fn small_config() -> RunConfig {
    RunConfig::from_json(
        r#"{
            "data": {"n_nodes": 16, "n_steps": 400, "radius": 0.45, "seed": 3},
            "teacher": {"hidden": 12, "head_hidden": 8, "embed_dim": 2, "epochs": 2},
            "student": {"hidden": 6, "embed_dim": 2, "epochs": 3},
            "bench": {"reps": 30, "warmup": 2, "depths": [0, 1, 2, 4]},
            "output_dir": "out"
        }"#,
    )
    .expect("small config parses")
}

/// Writes `cfg` to `<dir>/config.json`.
pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

pub fn out_dir(dir: &Path) -> PathBuf {
    dir.join("out")
}

/// Runs the binary from the config's directory, so relative output paths
/// resolve there.
pub fn stkd(args: &[&str], config: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stkd"));
    cmd.args(args)
        .arg("--config")
        .arg(config)
        .current_dir(config.parent().unwrap())
        .env_remove(stkd::config::OUTPUT_DIR_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

/// First connected geometric graph on `n` nodes at or after `seed`.
pub fn connected_geometric(n: usize, seed: u64) -> Graph {
    (0..)
        .map(|k| Graph::erdos_renyi_geometric(n, 0.3, seed + 1000 * k).unwrap())
        .find(|g| g.connected_components() == 1)
        .unwrap()
}

/// A z-scored `[history × n × 1]` window of synthetic readings on `graph`.
pub fn window_on(graph: &Graph, history: usize, seed: u64) -> Tensor {
    let cfg = SyntheticConfig {
        n_steps: history + 100,
        seed,
        ..SyntheticConfig::default()
    };
    let series = generate_synthetic(graph, &cfg).unwrap();
    let n = graph.n_nodes();
    let tail = &series.values()[(cfg.n_steps - history) * n..];
    let norm = Normalizer::fit(tail).unwrap();
    let data = tail.iter().map(|v| norm.apply(*v)).collect();
    Tensor::new(&[history, n, 1], data).unwrap()
}
