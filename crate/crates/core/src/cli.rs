//! The `stkd` command line.
//!
//! Exit codes: 0 on success, 1 when training diverges, 2 for usage, I/O,
//! configuration and data errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{DataSource, RunConfig, OUTPUT_DIR_ENV};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::eval::{
    bench_latency, bench_pair, compute_metrics, oversmoothing_study, student_predictions,
    targets, teacher_predictions, write_depth_csv, MetricsReport,
};
use crate::graph::Graph;
use crate::models::{load_checkpoint, save_checkpoint, AnyModel, StudentModel, TeacherModel};
use crate::train::{distill_student, train_student, train_teacher, write_history, Problem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "stkd", version, about = "Spatio-temporal knowledge distillation for traffic forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic graph, readings and a manifest.
    GenData(Flags),
    /// Train the graph teacher.
    TrainTeacher(Flags),
    /// Distill a student from a trained teacher, plus the no-KD ablation.
    Distill(Flags),
    /// Test-split accuracy of teacher and student.
    Eval(Flags),
    /// Single-window inference latency of teacher and student.
    Bench(Flags),
    /// MAD of untrained teachers of increasing depth.
    Oversmoothing(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    teacher_ckpt: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    student_ckpt: Option<PathBuf>,
    /// Switch both distillation terms off.
    #[arg(long)]
    no_kd: bool,
    /// Overrides the config's training seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e @ Error::Diverged { .. }) => {
            eprintln!("error: {e}");
            EXIT_DIVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Writes the parameters carried by a divergence error to
/// `<checkpoint>.last_good`, then hands the error back.
fn keep_last_good(e: Error, checkpoint: &Path) -> Error {
    if let Error::Diverged { last_good, .. } = &e {
        let mut name = checkpoint.as_os_str().to_owned();
        name.push(".last_good");
        let target = PathBuf::from(name);
        match save_checkpoint(last_good, &target) {
            Ok(()) => eprintln!("last good parameters written to {}", target.display()),
            Err(io) => eprintln!("could not save last good parameters: {io}"),
        }
    }
    e
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    flags: Flags,
}

impl Context {
    fn new(flags: Flags) -> Result<Self> {
        let mut cfg = RunConfig::load(&flags.config)?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        let out = cfg.output_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        write_text(&out.join("config.resolved.json"), &cfg.to_json())?;
        Ok(Context { cfg, out, flags })
    }

    fn teacher_path(&self) -> PathBuf {
        self.flags
            .teacher_ckpt
            .clone()
            .unwrap_or_else(|| self.out.join("teacher.ckpt"))
    }

    fn student_path(&self) -> PathBuf {
        self.flags
            .student_ckpt
            .clone()
            .unwrap_or_else(|| self.out.join("student.ckpt"))
    }

    fn load_teacher(&self) -> Result<TeacherModel> {
        load_checkpoint(self.teacher_path())?.into_teacher()
    }

    fn load_student(&self) -> Result<StudentModel> {
        load_checkpoint(self.student_path())?.into_student()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(f) => gen_data(&Context::new(f)?),
        Command::TrainTeacher(f) => cmd_train_teacher(&Context::new(f)?),
        Command::Distill(f) => cmd_distill(&Context::new(f)?),
        Command::Eval(f) => cmd_eval(&Context::new(f)?),
        Command::Bench(f) => cmd_bench(&Context::new(f)?),
        Command::Oversmoothing(f) => cmd_oversmoothing(&Context::new(f)?),
    }
}

fn gen_data(ctx: &Context) -> Result<()> {
    let data = &ctx.cfg.data;
    if data.source != DataSource::Synthetic {
        return Err(Error::Parameter("gen-data needs data.source = \"synthetic\"".into()));
    }
    let (graph, series) = data.synthesize()?;
    graph.write_edge_csv(ctx.out.join("graph.csv"))?;
    crate::data::write_readings_csv(&series, ctx.out.join("readings.csv"))?;
    let manifest = json!({
        "seed": data.seed,
        "n_nodes": graph.n_nodes(),
        "n_edges": graph.edges().len(),
        "components": graph.connected_components(),
        "radius": data.radius,
        "generator": data.generator(),
        "files": {"graph": "graph.csv", "readings": "readings.csv"},
    });
    write_json(&ctx.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} nodes, {} edges, {} steps to {}",
        graph.n_nodes(),
        graph.edges().len(),
        series.n_steps(),
        ctx.out.display()
    );
    Ok(())
}

fn cmd_train_teacher(ctx: &Context) -> Result<()> {
    let problem = ctx.cfg.data.problem()?;
    let path = ctx.teacher_path();
    let mut train = ctx.cfg.teacher_train();
    train.progress = true;
    let trained = train_teacher(ctx.cfg.teacher_config(&problem), &train, &problem)
        .map_err(|e| keep_last_good(e, &path))?;
    save_checkpoint(&AnyModel::Teacher(trained.model.clone()), &path)?;
    write_history(&trained.history, ctx.out.join("teacher_metrics.jsonl"))?;
    println!(
        "teacher: {} parameters, best val MAE {:.4} at epoch {}, saved to {}",
        trained.model.param_count(),
        trained.best_val_mae,
        trained.best_epoch,
        path.display()
    );
    Ok(())
}

fn test_metrics_teacher(t: &TeacherModel, p: &Problem) -> Result<MetricsReport> {
    let ds = &p.dataset;
    let w = ds.windows(Split::Test);
    let pred = teacher_predictions(t, &p.adjacency, ds, w.clone())?;
    compute_metrics(&pred, &targets(ds, w)?, &p.normalizer)
}

fn test_metrics_student(s: &StudentModel, p: &Problem) -> Result<MetricsReport> {
    let ds = &p.dataset;
    let w = ds.windows(Split::Test);
    let pred = student_predictions(s, ds, w.clone())?;
    compute_metrics(&pred, &targets(ds, w)?, &p.normalizer)
}

fn cmd_distill(ctx: &Context) -> Result<()> {
    let teacher = ctx.load_teacher()?;
    let problem = ctx.cfg.data.problem()?;
    let distill_cfg = if ctx.flags.no_kd {
        ctx.cfg.distill.without_kd()
    } else {
        ctx.cfg.distill.clone()
    };
    let path = ctx.student_path();
    let mut train = ctx.cfg.student_train();
    train.progress = true;
    let student_cfg = ctx.cfg.student_config(&problem);
    eprintln!("distilling student");
    let kd = distill_student(student_cfg.clone(), &train, &distill_cfg, &teacher, &problem)
        .map_err(|e| keep_last_good(e, &path))?;
    save_checkpoint(&AnyModel::Student(kd.trained.model.clone()), &path)?;
    write_history(&kd.trained.history, ctx.out.join("student_metrics.jsonl"))?;

    let ablation_path = ctx.out.join("student_no_kd.ckpt");
    eprintln!("training the no-KD ablation");
    let plain = train_student(student_cfg, &train, &problem)
        .map_err(|e| keep_last_good(e, &ablation_path))?;
    save_checkpoint(&AnyModel::Student(plain.model.clone()), &ablation_path)?;
    write_history(&plain.history, ctx.out.join("student_no_kd_metrics.jsonl"))?;

    let t = test_metrics_teacher(&teacher, &problem)?;
    let s_plain = test_metrics_student(&plain.model, &problem)?;
    let s_kd = test_metrics_student(&kd.trained.model, &problem)?;
    let report = json!({
        "kd_enabled": !ctx.flags.no_kd,
        "distill": distill_cfg,
        "teacher_test_mae": t.mae,
        "student_no_kd_test_mae": s_plain.mae,
        "student_kd_test_mae": s_kd.mae,
        "teacher_params": teacher.param_count(),
        "student_params": kd.trained.model.param_count(),
        "student_best_epoch": kd.trained.best_epoch,
        "student_no_kd_best_epoch": plain.best_epoch,
        "ablation_bitwise_equal": kd.trained.model.params().bitwise_eq(plain.model.params()),
        "adaptive_weights": kd.weights.as_slice(),
        "teacher_node_val_mae": kd.teacher_node_errors,
    });
    write_json(&ctx.out.join("distill_report.json"), &report)?;
    println!("{:<16} {:>10}", "model", "test MAE");
    println!("{:<16} {:>10.4}", "teacher", t.mae);
    println!("{:<16} {:>10.4}", "student no-KD", s_plain.mae);
    println!(
        "{:<16} {:>10.4}",
        if ctx.flags.no_kd { "student (λ=0)" } else { "student KD" },
        s_kd.mae
    );
    Ok(())
}

fn cmd_eval(ctx: &Context) -> Result<()> {
    let teacher = ctx.load_teacher()?;
    let student = ctx.load_student()?;
    let problem = ctx.cfg.data.problem()?;
    let t = test_metrics_teacher(&teacher, &problem)?;
    let s = test_metrics_student(&student, &problem)?;
    println!("{:<10} {:>10} {:>10} {:>10}", "model", "MAE", "RMSE", "MAPE");
    for (name, m) in [("teacher", &t), ("student", &s)] {
        let mape = m.mape.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!("{name:<10} {:>10.4} {:>10.4} {mape:>10}", m.mae, m.rmse);
    }
    write_json(
        &ctx.out.join("eval_report.json"),
        &json!({"split": "test", "teacher": t, "student": s}),
    )
}

fn cmd_bench(ctx: &Context) -> Result<()> {
    let teacher = ctx.load_teacher()?;
    let student = ctx.load_student()?;
    let problem = ctx.cfg.data.problem()?;
    let ds = &problem.dataset;
    let w = ds.windows(Split::Test).start;
    let window = ds.input_tensor(w);
    let slot = ds.time_slot(w);
    let b = &ctx.cfg.bench;
    let report = bench_latency(&teacher, &student, &problem.adjacency, &window, slot, b.reps, b.warmup)?;
    let (a, c) = bench_pair(
        ("student", "student"),
        || student.infer(&window, slot).map(drop),
        || student.infer(&window, slot).map(drop),
        b.reps,
        b.warmup,
    )?;
    let self_ratio = a.median_ns / c.median_ns;
    println!(
        "teacher median {:.1} µs, student median {:.1} µs, speedup {:.2}× (self check {:.3})",
        report.teacher.median_ns / 1e3,
        report.student.median_ns / 1e3,
        report.speedup,
        self_ratio
    );
    write_json(
        &ctx.out.join("bench_report.json"),
        &json!({"latency": report, "self_check_ratio": self_ratio}),
    )
}

fn cmd_oversmoothing(ctx: &Context) -> Result<()> {
    let problem = ctx.cfg.data.problem()?;
    let ds = &problem.dataset;
    let window = ds.input_tensor(ds.windows(Split::Test).start);
    let hidden = ctx.cfg.teacher.hidden;
    let depths = &ctx.cfg.bench.depths;
    let rows = oversmoothing_study(depths, &problem.graph, ctx.cfg.seed, &window, hidden)?;
    let complete = oversmoothing_study(depths, &Graph::complete(problem.n_nodes()), ctx.cfg.seed, &window, hidden)?;
    write_depth_csv(&rows, ctx.out.join("oversmoothing.csv"))?;
    write_json(
        &ctx.out.join("oversmoothing.json"),
        &json!({"graph": rows, "complete_graph": complete}),
    )?;
    println!("{:>5} {:>10} {:>14}", "depth", "MAD", "MAD complete");
    for (r, c) in rows.iter().zip(&complete) {
        println!("{:>5} {:>10.4} {:>14.4}", r.depth, r.mad, c.mad);
    }
    Ok(())
}
