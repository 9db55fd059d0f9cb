//! Accuracy metrics, latency benchmarking and the over-smoothing study.

mod bench;
mod metrics;
mod oversmoothing;

pub use bench::{bench_latency, bench_pair, LatencyReport, TimingSummary};
pub use metrics::{compute_metrics, HorizonMetrics, MetricsReport, MAPE_MASK};
pub use oversmoothing::{oversmoothing_study, write_depth_csv, DepthMad};

use std::ops::Range;

use crate::data::WindowedDataset;
use crate::error::Result;
use crate::graph::NormalizedAdjacency;
use crate::models::{rows_to_step_major, Batch, StudentModel, TeacherModel};
use crate::tensor::{Tape, Tensor};

/// Windows scored per forward pass during evaluation.
pub const EVAL_BATCH: usize = 16;

fn collect(
    ds: &WindowedDataset,
    windows: Range<usize>,
    mut run: impl FnMut(&Batch) -> Result<Vec<f64>>,
) -> Result<Tensor> {
    let (n, p) = (ds.n_nodes(), ds.horizon());
    let ws: Vec<usize> = windows.collect();
    let mut out = Vec::with_capacity(ws.len() * n * p);
    for chunk in ws.chunks(EVAL_BATCH) {
        let batch = Batch::from_dataset(ds, chunk)?;
        out.extend(rows_to_step_major(&run(&batch)?, n, p));
    }
    Tensor::new(&[ws.len(), p, n], out)
}

/// Teacher forecasts `[windows × horizon × n]` (normalized units).
pub fn teacher_predictions(
    teacher: &TeacherModel,
    adj: &NormalizedAdjacency,
    ds: &WindowedDataset,
    windows: Range<usize>,
) -> Result<Tensor> {
    collect(ds, windows, |batch| {
        let mut tape = Tape::new();
        let vars = teacher.params().bind_frozen(&mut tape);
        let out = teacher.forward(&mut tape, &vars, batch, adj)?;
        Ok(tape.value(out.pred).to_vec())
    })
}

/// Student forecasts `[windows × horizon × n]` (normalized units).
pub fn student_predictions(
    student: &StudentModel,
    ds: &WindowedDataset,
    windows: Range<usize>,
) -> Result<Tensor> {
    collect(ds, windows, |batch| {
        let mut tape = Tape::new();
        let vars = student.params().bind_frozen(&mut tape);
        let out = student.forward(&mut tape, &vars, batch, false)?;
        Ok(tape.value(out.pred).to_vec())
    })
}

/// Ground truth `[windows × horizon × n]` (normalized units).
pub fn targets(ds: &WindowedDataset, windows: Range<usize>) -> Result<Tensor> {
    let (n, p) = (ds.n_nodes(), ds.horizon());
    let mut out = Vec::with_capacity(windows.len() * n * p);
    let count = windows.len();
    for w in windows {
        out.extend_from_slice(ds.target(w));
    }
    Tensor::new(&[count, p, n], out)
}

/// Mean absolute error of each node over all windows and horizon steps,
/// scaled by `std` (original units for a z-score normalizer).
pub fn per_node_mae(pred: &Tensor, target: &Tensor, std: f64) -> Vec<f64> {
    let n = *pred.dims().last().unwrap_or(&0);
    let mut acc = vec![0.0; n];
    for (k, (p, y)) in pred.data().iter().zip(target.data()).enumerate() {
        acc[k % n] += (p - y).abs();
    }
    let rows = (pred.numel() / n.max(1)).max(1) as f64;
    acc.iter().map(|a| a / rows * std).collect()
}
