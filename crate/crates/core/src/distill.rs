//! Dual-level distillation objective.
//!
//! The student is fitted to the ground truth and, in addition, to two views
//! of the frozen teacher:
//!
//! * spatial level: the student's projected hidden state `Z·P` regresses
//!   the teacher's node representation `H` of a chosen block;
//! * temporal level: each node's horizon profile, softened by a
//!   temperature, is matched to the teacher's with `KL(teacher ‖ student)`.
//!
//! Both terms are modulated per node by [`AdaptiveWeights`], which shrink the
//! pull towards the teacher where the teacher itself is inaccurate.
//!
//! All tape functions take node-major rows: row `b·n + i` is node `i` of the
//! `b`-th window in a batch, and weights repeat for every window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{log_softmax_in_place, softmax_in_place, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveMode {
    Uniform,
    ErrorSoftmax,
}

/// How the reliability scale `ρ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// Median of the teacher's per-node errors.
    Median,
    /// The configured `rho`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub lambda_spatial: f64,
    pub lambda_temporal: f64,
    pub temperature: f64,
    pub adaptive_mode: AdaptiveMode,
    pub rho_mode: RhoMode,
    pub rho: f64,
    /// 1-based teacher block whose representation is matched; `None` is the
    /// last block.
    pub teacher_rep_layer: Option<usize>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            lambda_spatial: 1.0,
            lambda_temporal: 1.0,
            temperature: 2.0,
            adaptive_mode: AdaptiveMode::ErrorSoftmax,
            rho_mode: RhoMode::Median,
            rho: 1.0,
            teacher_rep_layer: None,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_spatial", self.lambda_spatial),
            ("lambda_temporal", self.lambda_temporal),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be positive, got {}", self.rho)));
        }
        if self.teacher_rep_layer == Some(0) {
            return Err(Error::Parameter("teacher_rep_layer is 1-based".into()));
        }
        Ok(())
    }

    /// The ablation: both distillation terms switched off.
    pub fn without_kd(&self) -> Self {
        DistillConfig {
            lambda_spatial: 0.0,
            lambda_temporal: 0.0,
            ..self.clone()
        }
    }

    /// Resolves `teacher_rep_layer` against a teacher with `blocks` blocks
    /// into a 0-based index.
    pub fn rep_index(&self, blocks: usize) -> Result<usize> {
        if blocks == 0 {
            return Err(Error::Parameter(
                "spatial distillation needs a teacher with at least one block".into(),
            ));
        }
        match self.teacher_rep_layer {
            None => Ok(blocks - 1),
            Some(l) if (1..=blocks).contains(&l) => Ok(l - 1),
            Some(l) => Err(Error::Parameter(format!(
                "teacher_rep_layer {l} outside 1..={blocks}"
            ))),
        }
    }
}

/// Per-node distillation weights with mean one.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveWeights {
    w: Vec<f64>,
}

impl AdaptiveWeights {
    pub fn uniform(n: usize) -> Self {
        AdaptiveWeights { w: vec![1.0; n] }
    }

    /// `n·softmax(−e/ρ)`, or all ones in uniform mode.
    pub fn from_errors(errors: &[f64], mode: AdaptiveMode, rho: f64) -> Result<Self> {
        if let Some(e) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(Error::Data(format!(
                "teacher per-node errors must be finite and non-negative, got {e}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        let n = errors.len();
        if mode == AdaptiveMode::Uniform {
            return Ok(Self::uniform(n));
        }
        let mut w: Vec<f64> = errors.iter().map(|e| -e).collect();
        softmax_in_place(&mut w, rho);
        w.iter_mut().for_each(|x| *x *= n as f64);
        Ok(AdaptiveWeights { w })
    }

    /// Weights under `cfg`, resolving a median `ρ` from the errors. A zero
    /// median falls back to the mean, then to one.
    pub fn for_config(errors: &[f64], cfg: &DistillConfig) -> Result<Self> {
        let rho = match cfg.rho_mode {
            RhoMode::Fixed => cfg.rho,
            RhoMode::Median => {
                let m = median(errors);
                let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
                if m > 0.0 && m.is_finite() {
                    m
                } else if mean > 0.0 && mean.is_finite() {
                    mean
                } else {
                    1.0
                }
            }
        };
        Self::from_errors(errors, cfg.adaptive_mode, rho)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `[rows × width]` matrix with row `r` filled by `w[r mod n]`.
    fn broadcast(&self, rows: usize, width: usize) -> Result<Tensor> {
        let n = self.w.len();
        if n == 0 || rows % n != 0 {
            return Err(Error::dim("adaptive weights", n, format!("{rows} rows")));
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend(std::iter::repeat_n(self.w[r % n], width));
        }
        Tensor::new(&[rows, width], data)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Mean absolute error.
pub fn prediction_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// `(1/rows)·Σᵢ wᵢ‖P·zᵢ − hᵢ‖² / width`, with the teacher side detached.
pub fn spatial_kd_loss(
    tape: &mut Tape,
    projected: Var,
    teacher_rep: Var,
    weights: &AdaptiveWeights,
) -> Result<Var> {
    let h = tape.detach(teacher_rep);
    let d = tape.sub(projected, h)?;
    let sq = tape.square(d);
    let (rows, width) = shape2(tape, sq, "spatial_kd_loss")?;
    let w = tape.constant(weights.broadcast(rows, width)?);
    let weighted = tape.mul(sq, w)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, 1.0 / (rows * width) as f64))
}

/// `(τ²/rows)·Σᵢ wᵢ·KL(softmax(tᵢ/τ) ‖ softmax(sᵢ/τ))` over the horizon axis.
pub fn temporal_kd_loss(
    tape: &mut Tape,
    student_pred: Var,
    teacher_pred: Var,
    temperature: f64,
    weights: &AdaptiveWeights,
) -> Result<Var> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if tape.shape(student_pred) != tape.shape(teacher_pred) {
        return Err(Error::dim(
            "temporal_kd_loss",
            tape.shape(student_pred),
            tape.shape(teacher_pred),
        ));
    }
    let (rows, width) = shape2(tape, student_pred, "temporal_kd_loss")?;
    let teacher = tape.value(teacher_pred).to_vec();
    let mut p = teacher.clone();
    let mut log_p = teacher;
    let w = weights.broadcast(rows, 1)?;
    for r in 0..rows {
        let row = r * width..(r + 1) * width;
        softmax_in_place(&mut p[row.clone()], temperature);
        log_softmax_in_place(&mut log_p[row.clone()], temperature);
        p[row].iter_mut().for_each(|x| *x *= w.data()[r]);
    }
    let log_q = tape.log_softmax_rows(student_pred, temperature)?;
    let log_p = tape.constant(Tensor::new(&[rows, width], log_p)?);
    let wp = tape.constant(Tensor::new(&[rows, width], p)?);
    let diff = tape.sub(log_p, log_q)?;
    let kl = tape.mul(wp, diff)?;
    let total = tape.sum(kl);
    Ok(tape.scale(total, temperature * temperature / rows as f64))
}

/// `L_pred + λ_s·L_spatial + λ_t·L_temporal`. A term whose weight is zero is
/// left out of the graph entirely, so it contributes no gradient at all.
pub fn total_loss(
    tape: &mut Tape,
    pred_loss: Var,
    spatial: Var,
    temporal: Var,
    cfg: &DistillConfig,
) -> Result<Var> {
    let mut total = pred_loss;
    for (term, lambda) in [(spatial, cfg.lambda_spatial), (temporal, cfg.lambda_temporal)] {
        if lambda != 0.0 {
            let scaled = tape.scale(term, lambda);
            total = tape.add(total, scaled)?;
        }
    }
    Ok(total)
}

fn shape2(tape: &Tape, v: Var, op: &'static str) -> Result<(usize, usize)> {
    tape.shape(v)
        .matrix_dims()
        .ok_or_else(|| Error::dim(op, tape.shape(v), "a matrix"))
}

/// Mean pairwise cosine distance between the rows of a representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mad {
    pub value: f64,
    /// Zero-norm rows left out of the pairs.
    pub excluded: usize,
}

pub fn mad_metric(reps: &Tensor) -> Result<Mad> {
    let (n, h) = match reps.dims() {
        [n, h] => (*n, *h),
        [h] => (1, *h),
        _ => return Err(Error::dim("mad_metric", reps.shape(), "[n × h]")),
    };
    if n < 2 {
        return Err(Error::Parameter(format!("MAD needs at least 2 rows, got {n}")));
    }
    let rows: Vec<(&[f64], f64)> = reps
        .data()
        .chunks_exact(h.max(1))
        .map(|row| (row, row.iter().map(|x| x * x).sum::<f64>()))
        .filter(|(_, sq)| *sq > 0.0)
        .collect();
    let excluded = n - rows.len();
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "MAD needs two nonzero rows, {excluded} of {n} rows are zero"
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, (a, sa)) in rows.iter().enumerate() {
        for (b, sb) in &rows[i + 1..] {
            let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            let cos = dot / (sa * sb).sqrt();
            total += 1.0 - cos.clamp(-1.0, 1.0);
            pairs += 1;
        }
    }
    Ok(Mad {
        value: total / pairs as f64,
        excluded,
    })
}
