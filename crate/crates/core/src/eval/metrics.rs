use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Targets with magnitude below this (original units) are left out of MAPE.
pub const MAPE_MASK: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    /// 1-based forecast step.
    pub step: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target falls under the mask.
    pub mape: Option<f64>,
    pub count: usize,
    pub per_horizon: Vec<HorizonMetrics>,
}

#[derive(Default)]
struct Acc {
    abs: f64,
    sq: f64,
    pct: f64,
    n: usize,
    n_pct: usize,
}

impl Acc {
    fn push(&mut self, p: f64, y: f64) {
        let d = p - y;
        self.abs += d.abs();
        self.sq += d * d;
        self.n += 1;
        if y.abs() >= MAPE_MASK {
            self.pct += d.abs() / y.abs();
            self.n_pct += 1;
        }
    }

    fn mae(&self) -> f64 {
        self.abs / self.n as f64
    }

    fn rmse(&self) -> f64 {
        (self.sq / self.n as f64).sqrt()
    }

    fn mape(&self) -> Option<f64> {
        (self.n_pct > 0).then(|| self.pct / self.n_pct as f64)
    }
}

/// MAE, RMSE and masked MAPE in original units.
///
/// `pred` and `target` are normalized values of equal shape. The horizon axis
/// is the second-to-last one (`[horizon × n]` or `[windows × horizon × n]`);
/// a vector counts as a single horizon step.
pub fn compute_metrics(pred: &Tensor, target: &Tensor, normalizer: &Normalizer) -> Result<MetricsReport> {
    if pred.dims() != target.dims() {
        return Err(Error::dim("compute_metrics", pred.shape(), target.shape()));
    }
    if pred.numel() == 0 {
        return Err(Error::Data("no predictions to score".into()));
    }
    let dims = pred.dims();
    let (steps, inner) = match dims.len() {
        0 | 1 => (1, pred.numel()),
        r => (dims[r - 2], dims[r - 1]),
    };
    let mut total = Acc::default();
    let mut per = (0..steps).map(|_| Acc::default()).collect::<Vec<_>>();
    for (k, (p, y)) in pred.data().iter().zip(target.data()).enumerate() {
        let (p, y) = (normalizer.invert(*p), normalizer.invert(*y));
        total.push(p, y);
        per[(k / inner.max(1)) % steps].push(p, y);
    }
    if !total.abs.is_finite() {
        return Err(Error::Numeric("non-finite prediction error".into()));
    }
    Ok(MetricsReport {
        mae: total.mae(),
        rmse: total.rmse(),
        mape: total.mape(),
        count: total.n,
        per_horizon: per
            .iter()
            .enumerate()
            .map(|(k, a)| HorizonMetrics {
                step: k + 1,
                mae: a.mae(),
                rmse: a.rmse(),
                mape: a.mape(),
            })
            .collect(),
    })
}
