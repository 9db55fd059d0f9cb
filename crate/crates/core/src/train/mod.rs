//! Teacher pre-training, plain student training and distillation.
//!
//! Every loop shares the same skeleton: shuffle the training windows with a
//! seeded generator, take Adam steps on mini-batches of whole windows (all
//! nodes), score the validation split after each epoch and keep the best
//! parameters seen. Training stops once `patience` further epochs fail to
//! improve on the best validation MAE.

mod adam;

pub use adam::{clip_grad_norm, grad_norm, AdamState};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Normalizer, Split, SplitFractions, TrafficSeries, WindowedDataset};
use crate::distill::{
    prediction_loss, spatial_kd_loss, temporal_kd_loss, total_loss, AdaptiveWeights,
    DistillConfig,
};
use crate::error::{Error, Result};
use crate::eval::{per_node_mae, student_predictions, targets, teacher_predictions};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::models::{
    AnyModel, Batch, ParamSet, StudentConfig, StudentModel, TeacherConfig, TeacherModel,
};
use crate::tensor::{Tape, Tensor, Var};

/// A graph together with its windowed, normalized readings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub graph: Graph,
    pub adjacency: NormalizedAdjacency,
    /// Windows over z-scored readings.
    pub dataset: WindowedDataset,
    /// Statistics of the training steps, for mapping back to original units.
    pub normalizer: Normalizer,
}

impl Problem {
    pub fn new(
        graph: Graph,
        series: TrafficSeries,
        history: usize,
        horizon: usize,
        fractions: SplitFractions,
    ) -> Result<Self> {
        if graph.n_nodes() != series.n_nodes() {
            return Err(Error::dim(
                "problem",
                format!("graph with {} nodes", graph.n_nodes()),
                format!("series with {} nodes", series.n_nodes()),
            ));
        }
        let raw = WindowedDataset::new(series, history, horizon, fractions)?;
        let (dataset, normalizer) = raw.normalized()?;
        if dataset.windows(Split::Val).is_empty() {
            return Err(Error::Data("validation split is empty".into()));
        }
        Ok(Problem {
            adjacency: graph.symmetric_normalize(),
            graph,
            dataset,
            normalizer,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    /// `base` with its node count, window lengths and day length taken
    /// from this problem.
    pub fn teacher_config(&self, base: TeacherConfig) -> TeacherConfig {
        TeacherConfig {
            n_nodes: self.n_nodes(),
            history: self.dataset.history(),
            horizon: self.dataset.horizon(),
            steps_per_day: self.dataset.steps_per_day(),
            ..base
        }
    }

    /// `base` shaped for this problem, projecting onto `teacher`'s width.
    pub fn student_config(&self, teacher: &TeacherConfig, base: StudentConfig) -> StudentConfig {
        StudentConfig {
            n_nodes: self.n_nodes(),
            history: self.dataset.history(),
            horizon: self.dataset.horizon(),
            steps_per_day: self.dataset.steps_per_day(),
            teacher_hidden: teacher.hidden,
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Print one line per epoch to stderr.
    #[serde(skip)]
    pub progress: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            lr: 1e-3,
            patience: 10,
            clip_norm: Some(5.0),
            seed: 42,
            progress: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Parameter(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation MAE in original units.
    pub val_mae: f64,
    pub pred_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_loss: Option<f64>,
}

/// Writes one JSON object per epoch.
pub fn write_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in history {
        let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct Trained<M> {
    /// Parameters from the epoch with the lowest validation MAE.
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

trait Learner: Clone {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn wrap(self) -> AnyModel;
}

impl Learner for TeacherModel {
    fn params(&self) -> &ParamSet {
        TeacherModel::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        TeacherModel::params_mut(self)
    }
    fn wrap(self) -> AnyModel {
        AnyModel::Teacher(self)
    }
}

impl Learner for StudentModel {
    fn params(&self) -> &ParamSet {
        StudentModel::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        StudentModel::params_mut(self)
    }
    fn wrap(self) -> AnyModel {
        AnyModel::Student(self)
    }
}

/// Loss of one batch: the total and its prediction / spatial / temporal parts.
struct StepLoss {
    total: Var,
    pred: Var,
    spatial: Option<Var>,
    temporal: Option<Var>,
}

fn fit<M: Learner>(
    mut model: M,
    cfg: &TrainConfig,
    problem: &Problem,
    mut step_loss: impl FnMut(&M, &mut Tape, &[Var], &Batch, &[usize]) -> Result<StepLoss>,
    mut val_mae: impl FnMut(&M) -> Result<f64>,
) -> Result<Trained<M>> {
    cfg.validate()?;
    let ds = &problem.dataset;
    let mut order: Vec<usize> = ds.windows(Split::Train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params(), cfg.lr);
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;
    let mut history = Vec::new();
    let diverged = |epoch, reason: String, best: &(f64, M, usize)| Error::Diverged {
        epoch,
        reason,
        last_good: Box::new(best.1.clone().wrap()),
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut seen = 0.0;
        let mut parts = (false, false);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_dataset(ds, chunk)?;
            let mut tape = Tape::new();
            let vars = model.params().bind(&mut tape);
            let loss = step_loss(&model, &mut tape, &vars, &batch, chunk)?;
            let value = tape.scalar(loss.total);
            if !value.is_finite() {
                return Err(diverged(epoch, format!("training loss is {value}"), &best));
            }
            let grads = tape.backward(loss.total)?;
            let params = model.params_mut();
            params.zero_grad();
            params.accumulate(&grads, &vars)?;
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(params, max);
            }
            if let Err(e) = adam.step(params) {
                return Err(diverged(epoch, e.to_string(), &best));
            }
            let w = chunk.len() as f64;
            sums[0] += w * value;
            sums[1] += w * tape.scalar(loss.pred);
            sums[2] += w * loss.spatial.map_or(0.0, |v| tape.scalar(v));
            sums[3] += w * loss.temporal.map_or(0.0, |v| tape.scalar(v));
            seen += w;
            parts = (loss.spatial.is_some(), loss.temporal.is_some());
        }
        let mae = val_mae(&model)?;
        if !mae.is_finite() {
            return Err(diverged(epoch, format!("validation MAE is {mae}"), &best));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: sums[0] / seen,
            val_mae: mae,
            pred_loss: sums[1] / seen,
            spatial_loss: parts.0.then(|| sums[2] / seen),
            temporal_loss: parts.1.then(|| sums[3] / seen),
        });
        if cfg.progress {
            let r = history.last().expect("just pushed");
            eprintln!(
                "epoch {:>3}  train loss {:.5}  val MAE {:.4}",
                r.epoch, r.train_loss, r.val_mae
            );
        }
        if mae < best.0 {
            best = (mae, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    let (best_val_mae, model, best_epoch) = best;
    Ok(Trained {
        model,
        history,
        best_epoch,
        best_val_mae,
    })
}

/// Validation MAE in original units.
fn val_mae_of(pred: &Tensor, problem: &Problem) -> Result<f64> {
    let ds = &problem.dataset;
    let y = targets(ds, ds.windows(Split::Val))?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / y.numel() as f64 * problem.normalizer.std)
}

fn target_var(tape: &mut Tape, batch: &Batch) -> Result<Var> {
    let y = batch
        .targets()
        .ok_or_else(|| Error::Contract("training batch without targets".into()))?;
    Ok(tape.constant(y.clone()))
}

/// Fits a teacher to the training windows with an MAE objective.
pub fn train_teacher(
    config: TeacherConfig,
    train: &TrainConfig,
    problem: &Problem,
) -> Result<Trained<TeacherModel>> {
    let model = TeacherModel::new(config, train.seed)?;
    let adj = &problem.adjacency;
    fit(
        model,
        train,
        problem,
        |m, tape, vars, batch, _| {
            let out = m.forward(tape, vars, batch, adj)?;
            let y = target_var(tape, batch)?;
            let pred = prediction_loss(tape, out.pred, y)?;
            Ok(StepLoss {
                total: pred,
                pred,
                spatial: None,
                temporal: None,
            })
        },
        |m| {
            let ds = &problem.dataset;
            val_mae_of(&teacher_predictions(m, adj, ds, ds.windows(Split::Val))?, problem)
        },
    )
}

/// Fits a student on the ground truth alone. No distillation term is ever
/// built on this path.
pub fn train_student(
    config: StudentConfig,
    train: &TrainConfig,
    problem: &Problem,
) -> Result<Trained<StudentModel>> {
    let model = StudentModel::new(config, train.seed)?;
    fit(
        model,
        train,
        problem,
        |m, tape, vars, batch, _| {
            let out = m.forward(tape, vars, batch, false)?;
            let y = target_var(tape, batch)?;
            let pred = prediction_loss(tape, out.pred, y)?;
            Ok(StepLoss {
                total: pred,
                pred,
                spatial: None,
                temporal: None,
            })
        },
        |m| student_val_mae(m, problem),
    )
}

fn student_val_mae(m: &StudentModel, problem: &Problem) -> Result<f64> {
    let ds = &problem.dataset;
    val_mae_of(&student_predictions(m, ds, ds.windows(Split::Val))?, problem)
}

/// Teacher outputs for every training window, computed once.
struct TeacherCache {
    first: usize,
    n: usize,
    horizon: usize,
    hidden: usize,
    /// Node-major `[n × horizon]` per window.
    pred: Vec<f64>,
    /// `[n × hidden]` per window.
    rep: Vec<f64>,
}

impl TeacherCache {
    fn build(teacher: &TeacherModel, problem: &Problem, rep_index: usize) -> Result<Self> {
        let ds = &problem.dataset;
        let windows = ds.windows(Split::Train);
        let (n, horizon, hidden) = (ds.n_nodes(), ds.horizon(), teacher.config().hidden);
        let mut pred = Vec::with_capacity(windows.len() * n * horizon);
        let mut rep = Vec::with_capacity(windows.len() * n * hidden);
        let ws: Vec<usize> = windows.clone().collect();
        for chunk in ws.chunks(crate::eval::EVAL_BATCH) {
            let batch = Batch::from_dataset(ds, chunk)?;
            let mut tape = Tape::new();
            let vars = teacher.params().bind_frozen(&mut tape);
            let out = teacher.forward(&mut tape, &vars, &batch, &problem.adjacency)?;
            pred.extend_from_slice(tape.value(out.pred));
            rep.extend_from_slice(tape.value(out.reps[rep_index]));
        }
        Ok(TeacherCache {
            first: windows.start,
            n,
            horizon,
            hidden,
            pred,
            rep,
        })
    }

    fn gather(&self, windows: &[usize]) -> Result<(Tensor, Tensor)> {
        let rows = windows.len() * self.n;
        let (mut p, mut h) = (Vec::with_capacity(rows * self.horizon), Vec::with_capacity(rows * self.hidden));
        for &w in windows {
            let k = w - self.first;
            let (sp, sh) = (self.n * self.horizon, self.n * self.hidden);
            p.extend_from_slice(&self.pred[k * sp..(k + 1) * sp]);
            h.extend_from_slice(&self.rep[k * sh..(k + 1) * sh]);
        }
        Ok((
            Tensor::new(&[rows, self.horizon], p)?,
            Tensor::new(&[rows, self.hidden], h)?,
        ))
    }
}

/// Per-node validation MAE of the teacher in original units.
pub fn teacher_node_errors(teacher: &TeacherModel, problem: &Problem) -> Result<Vec<f64>> {
    let ds = &problem.dataset;
    let val = ds.windows(Split::Val);
    let pred = teacher_predictions(teacher, &problem.adjacency, ds, val.clone())?;
    let y = targets(ds, val)?;
    Ok(per_node_mae(&pred, &y, problem.normalizer.std))
}

#[derive(Clone, Debug)]
pub struct Distilled {
    pub trained: Trained<StudentModel>,
    pub weights: AdaptiveWeights,
    pub teacher_node_errors: Vec<f64>,
}

/// Trains a student against the ground truth and the frozen `teacher`.
pub fn distill_student(
    config: StudentConfig,
    train: &TrainConfig,
    distill: &DistillConfig,
    teacher: &TeacherModel,
    problem: &Problem,
) -> Result<Distilled> {
    distill.validate()?;
    if config.teacher_hidden != teacher.config().hidden {
        return Err(Error::dim(
            "student projection",
            config.teacher_hidden,
            teacher.config().hidden,
        ));
    }
    let frozen = teacher.params().clone();
    let rep_index = distill.rep_index(teacher.config().blocks)?;
    let errors = teacher_node_errors(teacher, problem)?;
    let weights = AdaptiveWeights::for_config(&errors, distill)?;
    let cache = TeacherCache::build(teacher, problem, rep_index)?;
    let model = StudentModel::new(config, train.seed)?;
    let trained = fit(
        model,
        train,
        problem,
        |m, tape, vars, batch, windows| {
            let out = m.forward(tape, vars, batch, true)?;
            let y = target_var(tape, batch)?;
            let pred = prediction_loss(tape, out.pred, y)?;
            let (tp, th) = cache.gather(windows)?;
            let (tp, th) = (tape.constant(tp), tape.constant(th));
            let projected = out.projected.expect("projection requested");
            let spatial = spatial_kd_loss(tape, projected, th, &weights)?;
            let temporal = temporal_kd_loss(tape, out.pred, tp, distill.temperature, &weights)?;
            let total = total_loss(tape, pred, spatial, temporal, distill)?;
            Ok(StepLoss {
                total,
                pred,
                spatial: Some(spatial),
                temporal: Some(temporal),
            })
        },
        |m| student_val_mae(m, problem),
    )?;
    if !teacher.params().bitwise_eq(&frozen) {
        return Err(Error::Contract("teacher parameters changed during distillation".into()));
    }
    Ok(Distilled {
        trained,
        weights,
        teacher_node_errors: errors,
    })
}
