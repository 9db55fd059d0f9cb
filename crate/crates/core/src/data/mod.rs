//! Traffic series: synthetic generation, CSV ingestion, windowing and
//! normalization.

mod readings;
mod windows;

pub use readings::{load_readings_csv, write_readings_csv, Readings};
pub use windows::{Normalizer, Split, SplitFractions, WindowedDataset};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Node×time traffic readings, stored step-major: `values[t * n_nodes + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSeries {
    n_nodes: usize,
    n_steps: usize,
    step_minutes: u32,
    start_minute: u32,
    values: Vec<f64>,
}

impl TrafficSeries {
    pub fn new(n_nodes: usize, step_minutes: u32, values: Vec<f64>) -> Result<Self> {
        Self::with_start(n_nodes, step_minutes, 0, values)
    }

    /// `start_minute` is the minute of day of the first step.
    pub fn with_start(
        n_nodes: usize,
        step_minutes: u32,
        start_minute: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Parameter("traffic series needs at least one node".into()));
        }
        if step_minutes == 0 || 1440 % step_minutes != 0 {
            return Err(Error::Parameter(format!(
                "step length must divide a day evenly, got {step_minutes} minutes"
            )));
        }
        if values.len() % n_nodes != 0 {
            return Err(Error::dim("traffic series", format!("{n_nodes} nodes"), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite reading at step {}, node {}",
                i / n_nodes,
                i % n_nodes
            )));
        }
        Ok(TrafficSeries {
            n_nodes,
            n_steps: values.len() / n_nodes,
            step_minutes,
            start_minute: start_minute % 1440,
            values,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn start_minute(&self) -> u32 {
        self.start_minute
    }

    pub fn steps_per_day(&self) -> usize {
        (1440 / self.step_minutes) as usize
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Readings of all nodes at step `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_nodes..(t + 1) * self.n_nodes]
    }

    pub fn get(&self, t: usize, node: usize) -> f64 {
        self.values[t * self.n_nodes + node]
    }

    /// Time-of-day slot of step `t`, in `0..steps_per_day`.
    pub fn slot_of_step(&self, t: usize) -> usize {
        (self.start_minute as usize / self.step_minutes as usize + t) % self.steps_per_day()
    }

    /// Sample autocorrelation of one node's readings at `lag`.
    pub fn autocorrelation(&self, node: usize, lag: usize) -> f64 {
        let xs: Vec<f64> = (0..self.n_steps).map(|t| self.get(t, node)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        if lag >= xs.len() || var == 0.0 {
            return 0.0;
        }
        let cov: f64 = (0..xs.len() - lag)
            .map(|t| (xs[t] - mean) * (xs[t + lag] - mean))
            .sum();
        cov / var
    }
}

/// Parameters of the synthetic traffic process
/// `x_{t+1} = α·Â·x_t + β_i·(1 + sin(2πt/P + φ_i)) + γ·ε_t`, clipped at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_steps: usize,
    pub step_minutes: u32,
    pub seed: u64,
    /// Spatial coupling `α`.
    pub alpha: f64,
    /// Range of the per-node diurnal amplitude `β_i`.
    pub amplitude: (f64, f64),
    /// Innovation scale `γ`.
    pub noise: f64,
    /// Initial reading of every node; defaults to `β_i / (1 − α)`.
    pub initial_level: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_steps: 2016,
            step_minutes: 5,
            seed: 42,
            alpha: 0.85,
            amplitude: (20.0, 60.0),
            noise: 10.0,
            initial_level: None,
        }
    }
}

/// Simulates traffic flow on `graph`. Bitwise deterministic per seed.
pub fn generate_synthetic(graph: &Graph, cfg: &SyntheticConfig) -> Result<TrafficSeries> {
    if cfg.n_steps == 0 {
        return Err(Error::Parameter("n_steps must be positive".into()));
    }
    let (lo, hi) = cfg.amplitude;
    if !(lo >= 0.0 && hi >= lo && cfg.noise >= 0.0 && cfg.alpha >= 0.0) {
        return Err(Error::Parameter(format!(
            "invalid generator parameters: alpha={}, amplitude=({lo}, {hi}), noise={}",
            cfg.alpha, cfg.noise
        )));
    }
    if cfg.initial_level.is_none() && cfg.alpha >= 1.0 {
        return Err(Error::Parameter(
            "alpha ≥ 1 has no stationary level; set initial_level".into(),
        ));
    }
    let n = graph.n_nodes();
    let adj = graph.symmetric_normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amp: Vec<f64> = (0..n)
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..PI)).collect();
    let period = (1440 / cfg.step_minutes.max(1)) as f64;

    let mut x: Vec<f64> = match cfg.initial_level {
        Some(level) => vec![level; n],
        None => amp.iter().map(|b| b / (1.0 - cfg.alpha)).collect(),
    };
    let mut values = Vec::with_capacity(n * cfg.n_steps);
    let mut mixed = vec![0.0; n];
    for t in 0..cfg.n_steps {
        values.extend_from_slice(&x);
        adj.operator().apply(&x, 1, &mut mixed);
        let angle = 2.0 * PI * t as f64 / period;
        for i in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let drive = amp[i] * (1.0 + (angle + phase[i]).sin());
            x[i] = (cfg.alpha * mixed[i] + drive + cfg.noise * eps).max(0.0);
        }
    }
    TrafficSeries::new(n, cfg.step_minutes, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> Graph {
        Graph::erdos_renyi_geometric(12, 0.5, 1).unwrap()
    }

    #[test]
    fn generator_is_deterministic_and_non_negative() {
        let cfg = SyntheticConfig {
            n_steps: 600,
            noise: 40.0,
            ..Default::default()
        };
        let a = generate_synthetic(&graph(), &cfg).unwrap();
        let b = generate_synthetic(&graph(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| *v >= 0.0));
        assert_eq!((a.n_steps(), a.n_nodes()), (600, 12));
    }

    #[test]
    fn noiseless_unforced_averaging_on_regular_graph_is_constant() {
        let cfg = SyntheticConfig {
            n_steps: 50,
            alpha: 1.0,
            amplitude: (0.0, 0.0),
            noise: 0.0,
            initial_level: Some(7.0),
            ..Default::default()
        };
        let s = generate_synthetic(&Graph::ring(6), &cfg).unwrap();
        assert!(s.values().iter().all(|v| (v - 7.0).abs() <= 1e-12));
    }

    #[test]
    fn diurnal_cycle_dominates_autocorrelation() {
        let s = generate_synthetic(&graph(), &SyntheticConfig::default()).unwrap();
        let day = s.steps_per_day();
        for node in 0..s.n_nodes() {
            assert!(s.autocorrelation(node, day) > s.autocorrelation(node, day / 2));
        }
    }

    #[test]
    fn rejects_empty_series() {
        let cfg = SyntheticConfig {
            n_steps: 0,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&graph(), &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn slots_wrap_around_the_day() {
        let s = TrafficSeries::with_start(1, 5, 1435, vec![0.0; 3]).unwrap();
        assert_eq!(s.steps_per_day(), 288);
        assert_eq!(s.slot_of_step(0), 287);
        assert_eq!(s.slot_of_step(1), 0);
    }
}
