//! Spatio-temporal knowledge distillation for traffic-flow forecasting.
//!
//! A graph-aware teacher (gated temporal convolutions followed by normalized
//! graph convolutions) is trained on windowed traffic series. A graph-free
//! MLP student is then trained against three signals: the ground truth, the
//! teacher's node representations (spatial level) and the teacher's
//! temperature-softened horizon profiles (temporal level). Per-node adaptive
//! weights reduce distillation pressure where the teacher is unreliable.
//!
//! The crate also carries the harness around that pipeline: synthetic data
//! and CSV ingestion, Adam training with early stopping, checkpoints,
//! accuracy metrics, an interleaved latency benchmark and an over-smoothing
//! depth study.

pub mod cli;
pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod graph;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
