//! Run configuration shared by every command.
//!
//! Parsing is strict: unknown keys anywhere are rejected, and every field has
//! a default, so `{}` is a complete configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_readings_csv, SplitFractions, SyntheticConfig, TrafficSeries,
};
use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{StudentConfig, TeacherConfig};
use crate::train::{Problem, TrainConfig};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "STKD_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Edge list (`src,dst,weight`) for the csv source.
    pub graph_path: Option<PathBuf>,
    /// Readings (`timestamp,node_0,…`) for the csv source.
    pub readings_path: Option<PathBuf>,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub step_minutes: u32,
    pub history: usize,
    pub horizon: usize,
    pub splits: SplitFractions,
    /// Seed of the synthetic graph and readings.
    pub seed: u64,
    /// Connection radius of the synthetic geometric graph.
    pub radius: f64,
    pub alpha: f64,
    pub amplitude: (f64, f64),
    pub noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let g = SyntheticConfig::default();
        DataConfig {
            source: DataSource::Synthetic,
            graph_path: None,
            readings_path: None,
            n_nodes: 200,
            n_steps: g.n_steps,
            step_minutes: g.step_minutes,
            history: 12,
            horizon: 3,
            splits: SplitFractions::default(),
            seed: g.seed,
            radius: 0.1,
            alpha: g.alpha,
            amplitude: g.amplitude,
            noise: g.noise,
        }
    }
}

impl DataConfig {
    pub fn generator(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_steps: self.n_steps,
            step_minutes: self.step_minutes,
            seed: self.seed,
            alpha: self.alpha,
            amplitude: self.amplitude,
            noise: self.noise,
            initial_level: None,
        }
    }

    /// The synthetic graph and readings described by this block.
    pub fn synthesize(&self) -> Result<(Graph, TrafficSeries)> {
        let graph = Graph::erdos_renyi_geometric(self.n_nodes, self.radius, self.seed)?;
        let series = generate_synthetic(&graph, &self.generator())?;
        Ok((graph, series))
    }

    /// Loads or generates the data, then windows and normalizes it.
    pub fn problem(&self) -> Result<Problem> {
        let (graph, series) = match self.source {
            DataSource::Synthetic => self.synthesize()?,
            DataSource::Csv => {
                let need = |p: &Option<PathBuf>, what: &str| {
                    p.clone().ok_or_else(|| {
                        Error::Parameter(format!("data.{what} is required for the csv source"))
                    })
                };
                let readings = load_readings_csv(need(&self.readings_path, "readings_path")?)?;
                let n = readings.series.n_nodes();
                let graph = Graph::load_edge_csv(need(&self.graph_path, "graph_path")?, Some(n))?;
                (graph, readings.series)
            }
        };
        Problem::new(graph, series, self.history, self.horizon, self.splits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub blocks: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub embed_dim: usize,
    pub time_features: bool,
    pub head_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TeacherSection {
    fn default() -> Self {
        TeacherSection {
            blocks: 2,
            hidden: 64,
            kernel: 3,
            embed_dim: 8,
            time_features: true,
            head_hidden: 64,
            lr: 1e-3,
            epochs: 25,
            patience: 10,
            batch_size: 8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
    pub time_features: bool,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
}

impl Default for StudentSection {
    fn default() -> Self {
        StudentSection {
            hidden: 32,
            layers: 2,
            embed_dim: 8,
            time_features: true,
            lr: 1e-3,
            epochs: 100,
            patience: 10,
            batch_size: 8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub reps: usize,
    pub warmup: usize,
    /// Depths of the over-smoothing study.
    pub depths: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            reps: 50,
            warmup: 5,
            depths: vec![0, 1, 2, 4, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub teacher: TeacherSection,
    pub student: StudentSection,
    pub distill: DistillConfig,
    pub bench: BenchConfig,
    pub output_dir: PathBuf,
    /// Seed of parameter initialization and batch shuffling.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            teacher: TeacherSection::default(),
            student: StudentSection::default(),
            distill: DistillConfig::default(),
            bench: BenchConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.splits.validate()?;
        if self.data.history == 0 || self.data.horizon == 0 {
            return Err(Error::Parameter("history and horizon must be positive".into()));
        }
        self.distill.validate()?;
        self.teacher_train().validate()?;
        self.student_train().validate()?;
        Ok(())
    }

    pub fn teacher_train(&self) -> TrainConfig {
        let t = &self.teacher;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            patience: t.patience,
            clip_norm: t.clip_norm,
            seed: self.seed,
            progress: false,
        }
    }

    pub fn student_train(&self) -> TrainConfig {
        let s = &self.student;
        TrainConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr: s.lr,
            patience: s.patience,
            clip_norm: s.clip_norm,
            seed: self.seed,
            progress: false,
        }
    }

    pub fn teacher_config(&self, problem: &Problem) -> TeacherConfig {
        let t = &self.teacher;
        problem.teacher_config(TeacherConfig {
            hidden: t.hidden,
            blocks: t.blocks,
            kernel: t.kernel,
            embed_dim: t.embed_dim,
            time_features: t.time_features,
            head_hidden: t.head_hidden,
            ..TeacherConfig::default()
        })
    }

    pub fn student_config(&self, problem: &Problem) -> StudentConfig {
        let s = &self.student;
        problem.student_config(
            &self.teacher_config(problem),
            StudentConfig {
                hidden: s.hidden,
                layers: s.layers,
                embed_dim: s.embed_dim,
                time_features: s.time_features,
                ..StudentConfig::default()
            },
        )
    }
}
