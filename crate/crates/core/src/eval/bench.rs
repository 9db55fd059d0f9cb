use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::models::{StudentModel, TeacherModel};
use crate::tensor::Tensor;

/// Timed repetitions below this are rejected.
pub const MIN_REPS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub label: String,
    pub samples_ns: Vec<u64>,
    pub median_ns: f64,
    pub p10_ns: f64,
    pub p90_ns: f64,
}

impl TimingSummary {
    fn new(label: &str, samples_ns: Vec<u64>) -> Self {
        let mut sorted: Vec<f64> = samples_ns.iter().map(|&s| s as f64).collect();
        sorted.sort_by(f64::total_cmp);
        TimingSummary {
            label: label.to_string(),
            median_ns: quantile(&sorted, 0.5),
            p10_ns: quantile(&sorted, 0.1),
            p90_ns: quantile(&sorted, 0.9),
            samples_ns,
        }
    }
}

/// Linear interpolation between closest ranks of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n_nodes: usize,
    pub reps: usize,
    pub warmup: usize,
    pub teacher: TimingSummary,
    pub student: TimingSummary,
    /// `teacher.median_ns / student.median_ns`
    pub speedup: f64,
}

/// Times two workloads in alternation. Each repetition runs both, and the
/// order flips every repetition so drift affects them alike.
pub fn bench_pair(
    labels: (&str, &str),
    mut a: impl FnMut() -> Result<()>,
    mut b: impl FnMut() -> Result<()>,
    reps: usize,
    warmup: usize,
) -> Result<(TimingSummary, TimingSummary)> {
    if reps < MIN_REPS {
        return Err(Error::Parameter(format!(
            "benchmark needs at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    for _ in 0..warmup {
        a()?;
        b()?;
    }
    let mut ta = Vec::with_capacity(reps);
    let mut tb = Vec::with_capacity(reps);
    let time = |f: &mut dyn FnMut() -> Result<()>| -> Result<u64> {
        let start = Instant::now();
        f()?;
        Ok(start.elapsed().as_nanos().max(1) as u64)
    };
    for r in 0..reps {
        if r % 2 == 0 {
            ta.push(time(&mut a)?);
            tb.push(time(&mut b)?);
        } else {
            tb.push(time(&mut b)?);
            ta.push(time(&mut a)?);
        }
    }
    Ok((TimingSummary::new(labels.0, ta), TimingSummary::new(labels.1, tb)))
}

/// Single-window inference latency of teacher and student on the same input.
pub fn bench_latency(
    teacher: &TeacherModel,
    student: &StudentModel,
    adj: &NormalizedAdjacency,
    window: &Tensor,
    time_index: usize,
    reps: usize,
    warmup: usize,
) -> Result<LatencyReport> {
    let (t, s) = bench_pair(
        ("teacher", "student"),
        || {
            black_box(teacher.infer(adj, black_box(window), time_index)?);
            Ok(())
        },
        || {
            black_box(student.infer(black_box(window), time_index)?);
            Ok(())
        },
        reps,
        warmup,
    )?;
    let speedup = t.median_ns / s.median_ns;
    Ok(LatencyReport {
        n_nodes: adj.n(),
        reps,
        warmup,
        teacher: t,
        student: s,
        speedup,
    })
}
