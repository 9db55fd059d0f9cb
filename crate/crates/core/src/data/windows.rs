use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::TrafficSeries;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Fractions of the window range given to train, validation and test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "split fractions must be in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Supervised `(history, horizon)` windows over a traffic series.
///
/// Window `w` reads steps `[w, w + history)` and predicts
/// `[w + history, w + history + horizon)`. The split boundaries sit at the
/// floor of the cumulative fractions of the window count; the first
/// `history + horizon − 1` windows after each boundary are left untagged so
/// that no time step is shared between two splits.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    series: TrafficSeries,
    history: usize,
    horizon: usize,
    train: Range<usize>,
    val: Range<usize>,
    test: Range<usize>,
}

impl WindowedDataset {
    pub fn new(
        series: TrafficSeries,
        history: usize,
        horizon: usize,
        fractions: SplitFractions,
    ) -> Result<Self> {
        if history == 0 || horizon == 0 {
            return Err(Error::Parameter(format!(
                "history and horizon must be ≥ 1, got {history} and {horizon}"
            )));
        }
        fractions.validate()?;
        let span = history + horizon;
        if series.n_steps() < span {
            return Err(Error::Data(format!(
                "series of {} steps is shorter than one window ({span} steps)",
                series.n_steps()
            )));
        }
        let n_windows = series.n_steps() - span + 1;
        let b1 = (fractions.train * n_windows as f64).floor() as usize;
        let b2 = (((fractions.train + fractions.val) * n_windows as f64).floor() as usize).max(b1);
        let gap = span - 1;
        let train = 0..b1;
        let val = (b1 + gap).min(b2)..b2;
        let test = (b2 + gap).min(n_windows)..n_windows;
        if train.is_empty() {
            return Err(Error::Data(format!(
                "series of {} steps leaves no training windows",
                series.n_steps()
            )));
        }
        Ok(WindowedDataset {
            series,
            history,
            horizon,
            train,
            val,
            test,
        })
    }

    pub fn series(&self) -> &TrafficSeries {
        &self.series
    }

    pub fn n_nodes(&self) -> usize {
        self.series.n_nodes()
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_windows(&self) -> usize {
        self.series.n_steps() - self.history - self.horizon + 1
    }

    pub fn windows(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }

    pub fn split_of(&self, w: usize) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|s| self.windows(*s).contains(&w))
    }

    /// Steps read or predicted by window `w`.
    pub fn span(&self, w: usize) -> Range<usize> {
        w..w + self.history + self.horizon
    }

    /// Input of window `w`, step-major `[history × n_nodes]`.
    pub fn input(&self, w: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.series.values()[w * n..(w + self.history) * n]
    }

    /// Target of window `w`, step-major `[horizon × n_nodes]`.
    pub fn target(&self, w: usize) -> &[f64] {
        let n = self.n_nodes();
        let start = w + self.history;
        &self.series.values()[start * n..(start + self.horizon) * n]
    }

    /// Input of window `w` as a `[history × n_nodes × 1]` tensor.
    pub fn input_tensor(&self, w: usize) -> Tensor {
        Tensor::new(&[self.history, self.n_nodes(), 1], self.input(w).to_vec())
            .expect("window slice matches its shape")
    }

    /// Target of window `w` as a `[horizon × n_nodes]` tensor.
    pub fn target_tensor(&self, w: usize) -> Tensor {
        Tensor::new(&[self.horizon, self.n_nodes()], self.target(w).to_vec())
            .expect("window slice matches its shape")
    }

    /// Time-of-day slot of the last observed step of window `w`.
    pub fn time_slot(&self, w: usize) -> usize {
        self.series.slot_of_step(w + self.history - 1)
    }

    pub fn steps_per_day(&self) -> usize {
        self.series.steps_per_day()
    }

    /// Steps touched by any training window.
    pub fn train_steps(&self) -> Range<usize> {
        0..self.train.end + self.history + self.horizon - 1
    }

    /// Fits a z-score normalizer on the training steps and returns the
    /// dataset with every reading transformed by it.
    pub fn normalized(&self) -> Result<(WindowedDataset, Normalizer)> {
        let n = self.n_nodes();
        let steps = self.train_steps();
        let norm = Normalizer::fit(&self.series.values()[steps.start * n..steps.end * n])?;
        let values = self.series.values().iter().map(|v| norm.apply(*v)).collect();
        let series = TrafficSeries::with_start(
            n,
            self.series.step_minutes(),
            self.series.start_minute(),
            values,
        )?;
        Ok((
            WindowedDataset {
                series,
                ..self.clone()
            },
            norm,
        ))
    }
}

/// Z-score transform with statistics fitted on training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    /// The transform that leaves values unchanged.
    pub const IDENTITY: Normalizer = Normalizer { mean: 0.0, std: 1.0 };

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot fit a normalizer on no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Data(format!(
                "training readings have zero variance (constant {mean})"
            )));
        }
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
