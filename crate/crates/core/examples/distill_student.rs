//! Teacher, then a graph-free student with and without distillation.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use stkd::config::RunConfig;
use stkd::eval::{compute_metrics, student_predictions, targets, teacher_predictions};
use stkd::models::StudentModel;
use stkd::train::{distill_student, train_student, train_teacher, Problem};

fn test_mae(s: &StudentModel, p: &Problem) -> stkd::Result<f64> {
    let ds = &p.dataset;
    let w = ds.windows(stkd::data::Split::Test);
    let pred = student_predictions(s, ds, w.clone())?;
    Ok(compute_metrics(&pred, &targets(ds, w)?, &p.normalizer)?.mae)
}

fn main() -> stkd::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{
            "data": {"n_nodes": 40, "n_steps": 1152, "radius": 0.25},
            "teacher": {"hidden": 32, "epochs": 8},
            "student": {"hidden": 16, "epochs": 15},
            "distill": {"lambda_spatial": 1.0, "lambda_temporal": 1.0, "temperature": 2.0}
        }"#,
    )?;
    let problem = cfg.data.problem()?;
    let teacher = train_teacher(cfg.teacher_config(&problem), &cfg.teacher_train(), &problem)?.model;
    let ds = &problem.dataset;
    let w = ds.windows(stkd::data::Split::Test);
    let tp = teacher_predictions(&teacher, &problem.adjacency, ds, w.clone())?;
    let teacher_mae = compute_metrics(&tp, &targets(ds, w)?, &problem.normalizer)?.mae;

    let student_cfg = cfg.student_config(&problem);
    let plain = train_student(student_cfg.clone(), &cfg.student_train(), &problem)?;
    let kd = distill_student(student_cfg, &cfg.student_train(), &cfg.distill, &teacher, &problem)?;
    let last = kd.trained.history.last().unwrap();
    println!(
        "last KD epoch: pred {:.4}, spatial {:.5}, temporal {:.6}",
        last.pred_loss,
        last.spatial_loss.unwrap(),
        last.temporal_loss.unwrap()
    );
    let (lo, hi) = kd.weights.as_slice().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("adaptive node weights in [{lo:.3}, {hi:.3}]");

    println!("{:<14} {:>8} {:>10}", "model", "params", "test MAE");
    println!("{:<14} {:>8} {:>10.4}", "teacher", teacher.param_count(), teacher_mae);
    println!("{:<14} {:>8} {:>10.4}", "student", plain.model.param_count(), test_mae(&plain.model, &problem)?);
    println!("{:<14} {:>8} {:>10.4}", "student + KD", kd.trained.model.param_count(), test_mae(&kd.trained.model, &problem)?);
    Ok(())
}
