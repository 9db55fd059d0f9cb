//! The graph-aware teacher, the graph-free student, and their checkpoints.

mod checkpoint;
mod student;
mod teacher;

pub use checkpoint::{load_checkpoint, save_checkpoint, AnyModel, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use student::{StudentConfig, StudentModel, StudentOutput};
pub use teacher::{TeacherConfig, TeacherModel, TeacherOutput};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// A named learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered list of parameters. The order is the binding order used by every
/// forward pass and the record order of checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.params.push(Param {
            name: name.into(),
            tensor: tensor.with_requires_grad(true),
        });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(&p.tensor)).collect()
    }

    /// Records every parameter as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.constant(p.tensor.clone().with_requires_grad(false)))
            .collect()
    }

    /// Adds the gradients of `vars` (as returned by [`ParamSet::bind`]).
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var]) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(vars) {
            grads.accumulate_into(*v, &mut p.tensor)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// True when both sets hold bitwise-identical values.
    pub fn bitwise_eq(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.tensor.dims() == b.tensor.dims()
                    && a.tensor
                        .data()
                        .iter()
                        .zip(b.tensor.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Replaces values with those of `other`, which must have the same layout.
    pub(crate) fn load_values(&mut self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if mine.name != theirs.name || mine.tensor.dims() != theirs.tensor.dims() {
                return Err(Error::Format(format!(
                    "parameter `{}` {} does not match `{}` {}",
                    theirs.name,
                    theirs.tensor.shape(),
                    mine.name,
                    mine.tensor.shape()
                )));
            }
            mine.tensor
                .data_mut()
                .copy_from_slice(theirs.tensor.data());
        }
        Ok(())
    }
}

/// Glorot-uniform `[fan_in × fan_out]` matrix, bound `√(6/(fan_in+fan_out))`.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(&[fan_in, fan_out], data).expect("glorot shape")
}

/// Node embedding tiled over the batch and sin/cos of each window's time
/// slot, as extra per-row input columns.
pub(crate) fn side_inputs(
    tape: &mut Tape,
    embedding: Option<Var>,
    batch: &Batch,
    time_features: bool,
    steps_per_day: usize,
) -> Result<Vec<Var>> {
    let mut parts = Vec::with_capacity(2);
    if let Some(e) = embedding {
        parts.push(tape.tile_rows(e, batch.n_windows())?);
    }
    if time_features {
        if let Some(&s) = batch.slots().iter().find(|&&s| s >= steps_per_day) {
            return Err(Error::Parameter(format!(
                "time index {s} outside 0..{steps_per_day}"
            )));
        }
        let mut enc = Vec::with_capacity(batch.rows() * 2);
        for &s in batch.slots() {
            let angle = std::f64::consts::TAU * s as f64 / steps_per_day as f64;
            for _ in 0..batch.n_nodes() {
                enc.push(angle.sin());
                enc.push(angle.cos());
            }
        }
        parts.push(tape.constant(Tensor::new(&[batch.rows(), 2], enc)?));
    }
    Ok(parts)
}

pub(crate) fn zeros_row(width: usize) -> Tensor {
    Tensor::zeros(&[1, width]).expect("row shape")
}

/// A group of windows laid out for the models.
///
/// Rows are node-major within each window: row `b·n + i` belongs to node `i`
/// of the `b`-th window. The teacher additionally reads a time-major stack in
/// which row `t·(B·n) + b·n + i` holds the reading at history step `t`.
#[derive(Clone, Debug)]
pub struct Batch {
    n_nodes: usize,
    n_windows: usize,
    history: usize,
    horizon: usize,
    /// `[B·n × history]`
    pub(crate) history_rows: Tensor,
    /// `[history·B·n × 1]`
    pub(crate) sequence: Tensor,
    /// `[B·n × horizon]`, present when built from a dataset.
    pub(crate) target_rows: Option<Tensor>,
    pub(crate) slots: Vec<usize>,
}

impl Batch {
    /// Builds from step-major `[history × n]` inputs (and optional
    /// `[horizon × n]` targets), one entry per window.
    pub fn from_step_major(
        n_nodes: usize,
        history: usize,
        horizon: usize,
        inputs: &[&[f64]],
        targets: Option<&[&[f64]]>,
        slots: Vec<usize>,
    ) -> Result<Self> {
        let b = inputs.len();
        if b == 0 || slots.len() != b {
            return Err(Error::Parameter(format!(
                "batch needs matching inputs and time slots, got {b} and {}",
                slots.len()
            )));
        }
        let m = b * n_nodes;
        let mut hist = vec![0.0; m * history];
        let mut seq = vec![0.0; history * m];
        for (w, input) in inputs.iter().enumerate() {
            if input.len() != history * n_nodes {
                return Err(Error::dim(
                    "batch input",
                    format!("[{history}×{n_nodes}]"),
                    input.len(),
                ));
            }
            for t in 0..history {
                for i in 0..n_nodes {
                    let v = input[t * n_nodes + i];
                    hist[(w * n_nodes + i) * history + t] = v;
                    seq[t * m + w * n_nodes + i] = v;
                }
            }
        }
        let target_rows = match targets {
            None => None,
            Some(ts) => {
                if ts.len() != b {
                    return Err(Error::dim("batch targets", b, ts.len()));
                }
                let mut rows = vec![0.0; m * horizon];
                for (w, target) in ts.iter().enumerate() {
                    if target.len() != horizon * n_nodes {
                        return Err(Error::dim(
                            "batch target",
                            format!("[{horizon}×{n_nodes}]"),
                            target.len(),
                        ));
                    }
                    for k in 0..horizon {
                        for i in 0..n_nodes {
                            rows[(w * n_nodes + i) * horizon + k] = target[k * n_nodes + i];
                        }
                    }
                }
                Some(Tensor::new(&[m, horizon], rows)?)
            }
        };
        Ok(Batch {
            n_nodes,
            n_windows: b,
            history,
            horizon,
            history_rows: Tensor::new(&[m, history], hist)?,
            sequence: Tensor::new(&[history * m, 1], seq)?,
            target_rows,
            slots,
        })
    }

    /// Windows `ws` of a dataset, with targets.
    pub fn from_dataset(ds: &WindowedDataset, ws: &[usize]) -> Result<Self> {
        let inputs: Vec<&[f64]> = ws.iter().map(|&w| ds.input(w)).collect();
        let targets: Vec<&[f64]> = ws.iter().map(|&w| ds.target(w)).collect();
        let slots = ws.iter().map(|&w| ds.time_slot(w)).collect();
        Self::from_step_major(
            ds.n_nodes(),
            ds.history(),
            ds.horizon(),
            &inputs,
            Some(&targets),
            slots,
        )
    }

    /// A single `[history × n]` or `[history × n × 1]` window.
    pub fn from_window(window: &Tensor, horizon: usize, slot: usize) -> Result<Self> {
        let dims = window.dims();
        let ok = matches!(dims, [_, _] | [_, _, 1]);
        if !ok {
            return Err(Error::dim("window", window.shape(), "[history × n × 1]"));
        }
        Self::from_step_major(dims[1], dims[0], horizon, &[window.data()], None, vec![slot])
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    /// `B·n`
    pub fn rows(&self) -> usize {
        self.n_windows * self.n_nodes
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    /// Node-major targets `[B·n × horizon]`.
    pub fn targets(&self) -> Option<&Tensor> {
        self.target_rows.as_ref()
    }
}

/// Converts node-major `[B·n × horizon]` rows to `[B × horizon × n]` order.
pub fn rows_to_step_major(rows: &[f64], n_nodes: usize, horizon: usize) -> Vec<f64> {
    let b = rows.len() / (n_nodes * horizon);
    let mut out = vec![0.0; rows.len()];
    for w in 0..b {
        for i in 0..n_nodes {
            for k in 0..horizon {
                out[w * horizon * n_nodes + k * n_nodes + i] = rows[(w * n_nodes + i) * horizon + k];
            }
        }
    }
    out
}
