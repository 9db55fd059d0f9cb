mod common;

use stkd::distill::DistillConfig;
use stkd::models::{StudentModel, TeacherModel};
use stkd::train::{distill_student, train_student, train_teacher, Problem, TrainConfig};

fn setup() -> (stkd::config::RunConfig, Problem) {
    let cfg = common::small_config();
    let problem = cfg.data.problem().unwrap();
    (cfg, problem)
}

fn teacher(cfg: &stkd::config::RunConfig, problem: &Problem, epochs: usize) -> TeacherModel {
    let train = TrainConfig { epochs, ..cfg.teacher_train() };
    train_teacher(cfg.teacher_config(problem), &train, problem).unwrap().model
}

#[test]
fn teacher_training_descends_and_keeps_the_best_epoch() {
    let (cfg, problem) = setup();
    let train = TrainConfig { epochs: 6, lr: 3e-3, ..cfg.teacher_train() };
    let out = train_teacher(cfg.teacher_config(&problem), &train, &problem).unwrap();
    let h = &out.history;
    assert!(h.len() <= 6);
    assert!(h.last().unwrap().train_loss < h[0].train_loss);
    let best = h.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_mae, best);
    assert_eq!(h[out.best_epoch - 1].val_mae, best);
}

#[test]
fn patience_zero_stops_one_epoch_after_the_best() {
    let (cfg, problem) = setup();
    let train = TrainConfig { epochs: 40, patience: 0, lr: 0.05, ..cfg.student_train() };
    let out = train_student(cfg.student_config(&problem), &train, &problem).unwrap();
    let h = &out.history;
    assert!(h.len() < 40, "expected an early stop");
    assert_eq!(h.len(), out.best_epoch + 1);
    assert!(h.last().unwrap().val_mae >= out.best_val_mae);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (cfg, problem) = setup();
    let a = teacher(&cfg, &problem, 2);
    let b = teacher(&cfg, &problem, 2);
    assert!(a.params().bitwise_eq(b.params()));
    let s = cfg.student_train();
    let x = distill_student(cfg.student_config(&problem), &s, &cfg.distill, &a, &problem).unwrap();
    let y = distill_student(cfg.student_config(&problem), &s, &cfg.distill, &b, &problem).unwrap();
    assert!(x.trained.model.params().bitwise_eq(y.trained.model.params()));
    assert_eq!(x.trained.history, y.trained.history);
}

#[test]
fn distillation_leaves_the_teacher_alone_and_logs_every_component() {
    let (cfg, problem) = setup();
    let t = teacher(&cfg, &problem, 1);
    let before = t.params().clone();
    let out = distill_student(cfg.student_config(&problem), &cfg.student_train(), &cfg.distill, &t, &problem).unwrap();
    assert!(t.params().bitwise_eq(&before));
    assert_eq!(out.trained.history.len(), cfg.student.epochs);
    for r in &out.trained.history {
        let parts = [r.train_loss, r.pred_loss, r.spatial_loss.unwrap(), r.temporal_loss.unwrap(), r.val_mae];
        assert!(parts.iter().all(|v| v.is_finite()), "{r:?}");
        assert!(r.train_loss >= r.pred_loss);
    }
    assert_eq!(out.weights.len(), problem.n_nodes());
    let mean = out.weights.as_slice().iter().sum::<f64>() / problem.n_nodes() as f64;
    assert!((mean - 1.0).abs() < 1e-9);
}

#[test]
fn zero_lambdas_equal_plain_training_bitwise() {
    let (cfg, problem) = setup();
    let t = teacher(&cfg, &problem, 1);
    let s = cfg.student_train();
    let off = DistillConfig { lambda_spatial: 0.0, lambda_temporal: 0.0, ..cfg.distill.clone() };
    let a = distill_student(cfg.student_config(&problem), &s, &off, &t, &problem).unwrap();
    let b = train_student(cfg.student_config(&problem), &s, &problem).unwrap();
    assert!(a.trained.model.params().bitwise_eq(b.model.params()));
    let only_spatial = DistillConfig { lambda_temporal: 0.0, ..cfg.distill.clone() };
    let c = distill_student(cfg.student_config(&problem), &s, &only_spatial, &t, &problem).unwrap();
    assert!(!c.trained.model.params().bitwise_eq(b.model.params()));
}

#[test]
fn clipping_is_inert_below_the_threshold() {
    let (cfg, problem) = setup();
    let base = TrainConfig { epochs: 1, clip_norm: Some(1e6), ..cfg.student_train() };
    let a = train_student(cfg.student_config(&problem), &base, &problem).unwrap();
    let b = train_student(cfg.student_config(&problem), &TrainConfig { clip_norm: None, ..base.clone() }, &problem).unwrap();
    assert!(a.model.params().bitwise_eq(b.model.params()));
    let tight = TrainConfig { clip_norm: Some(1e-3), ..base };
    let c = train_student(cfg.student_config(&problem), &tight, &problem).unwrap();
    assert!(!c.model.params().bitwise_eq(b.model.params()));
}

#[test]
fn mismatched_projection_width_is_rejected() {
    let (cfg, problem) = setup();
    let t = teacher(&cfg, &problem, 1);
    let mut sc = cfg.student_config(&problem);
    sc.teacher_hidden += 1;
    let r = distill_student(sc, &cfg.student_train(), &cfg.distill, &t, &problem);
    assert!(matches!(r, Err(stkd::Error::Dimension { .. })));
}

#[test]
fn teacher_outweighs_student_at_default_size() {
    let cfg = stkd::config::RunConfig::default();
    let problem = cfg.data.problem().unwrap();
    let t = TeacherModel::new(cfg.teacher_config(&problem), 0).unwrap();
    let s = StudentModel::new(cfg.student_config(&problem), 0).unwrap();
    assert!(t.param_count() >= 5 * s.param_count(), "{} vs {}", t.param_count(), s.param_count());
}
