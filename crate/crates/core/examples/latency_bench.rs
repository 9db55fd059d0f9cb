//! Single-window inference latency of default-size teacher and student.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use stkd::config::RunConfig;
use stkd::eval::bench_latency;
use stkd::models::{StudentModel, TeacherModel};

fn main() -> stkd::Result<()> {
    let cfg = RunConfig::default();
    let problem = cfg.data.problem()?;
    let teacher = TeacherModel::new(cfg.teacher_config(&problem), 0)?;
    let student = StudentModel::new(cfg.student_config(&problem), 0)?;
    let ds = &problem.dataset;
    let w = ds.windows(stkd::data::Split::Test).start;
    let report = bench_latency(
        &teacher,
        &student,
        &problem.adjacency,
        &ds.input_tensor(w),
        ds.time_slot(w),
        50,
        5,
    )?;
    for t in [&report.teacher, &report.student] {
        println!(
            "{:<8} median {:>9.1} µs  p10 {:>9.1} µs  p90 {:>9.1} µs",
            t.label,
            t.median_ns / 1e3,
            t.p10_ns / 1e3,
            t.p90_ns / 1e3
        );
    }
    println!(
        "{} nodes, teacher {} params, student {} params, speedup {:.1}×",
        report.n_nodes,
        teacher.param_count(),
        student.param_count(),
        report.speedup
    );
    Ok(())
}
