//! Trains the graph teacher on a small synthetic problem and saves it.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use stkd::config::RunConfig;
use stkd::eval::{compute_metrics, targets, teacher_predictions};
use stkd::models::{load_checkpoint, save_checkpoint, AnyModel};
use stkd::train::train_teacher;

fn main() -> stkd::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{
            "data": {"n_nodes": 40, "n_steps": 1152, "radius": 0.25},
            "teacher": {"hidden": 32, "epochs": 8}
        }"#,
    )?;
    let problem = cfg.data.problem()?;
    let mut train = cfg.teacher_train();
    train.progress = true;
    let trained = train_teacher(cfg.teacher_config(&problem), &train, &problem)?;
    println!(
        "{} parameters, best val MAE {:.3} at epoch {}",
        trained.model.param_count(),
        trained.best_val_mae,
        trained.best_epoch
    );

    let ds = &problem.dataset;
    let test = ds.windows(stkd::data::Split::Test);
    let pred = teacher_predictions(&trained.model, &problem.adjacency, ds, test.clone())?;
    let report = compute_metrics(&pred, &targets(ds, test)?, &problem.normalizer)?;
    println!("test MAE {:.3}, RMSE {:.3}", report.mae, report.rmse);
    for h in &report.per_horizon {
        println!("  step {}: MAE {:.3}", h.step, h.mae);
    }

    let path = std::env::temp_dir().join("stkd-example-teacher.ckpt");
    save_checkpoint(&AnyModel::Teacher(trained.model.clone()), &path)?;
    let back = load_checkpoint(&path)?.into_teacher()?;
    println!("saved {} and reloaded it bitwise: {}", path.display(), back.params().bitwise_eq(trained.model.params()));
    Ok(())
}
