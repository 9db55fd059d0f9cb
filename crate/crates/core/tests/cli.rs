mod common;

use std::fs;

use common::{out_dir, small_config, stkd, write_config};
use serde_json::Value;

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = stkd(&["gen-data"], &missing, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.json"), "{err}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"distill": {"lambda_spatail": 1.0}}"#).unwrap();
    let out = stkd(&["gen-data"], &path, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_spatail"));
}

#[test]
fn usage_errors_exit_2() {
    let bin = env!("CARGO_BIN_EXE_stkd");
    let none = std::process::Command::new(bin).output().unwrap();
    assert_eq!(none.status.code(), Some(2));
    let no_config = std::process::Command::new(bin).arg("eval").output().unwrap();
    assert_eq!(no_config.status.code(), Some(2));
    let help = std::process::Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn gen_data_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let snapshot = || {
        assert!(stkd(&["gen-data"], &config, &[]).status.success());
        ["graph.csv", "readings.csv", "manifest.json"].map(|f| fs::read(out_dir(dir.path()).join(f)).unwrap())
    };
    let first = snapshot();
    let second = snapshot();
    assert_eq!(first, second);
    let manifest = read_json(&out_dir(dir.path()).join("manifest.json"));
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["generator"]["alpha"], 0.85);
    assert_eq!(manifest["n_nodes"], 16);
}

#[test]
fn eval_without_checkpoints_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = stkd(&["eval"], &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("teacher.ckpt"));
    let out = stkd(&["distill", "--teacher-ckpt", "elsewhere.ckpt"], &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("elsewhere.ckpt"));
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let target = dir.path().join("elsewhere");
    let out = stkd(&["gen-data"], &config, &[("STKD_OUTPUT_DIR", target.to_str().unwrap())]);
    assert!(out.status.success());
    assert!(target.join("readings.csv").exists());
    assert!(!out_dir(dir.path()).exists());
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    for cmd in ["gen-data", "train-teacher", "distill", "eval", "bench", "oversmoothing"] {
        let out = stkd(&[cmd], &config, &[]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = out_dir(dir.path());
    let report = read_json(&out.join("distill_report.json"));
    for key in ["teacher_test_mae", "student_no_kd_test_mae", "student_kd_test_mae"] {
        assert!(report[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert_eq!(report["ablation_bitwise_equal"], false);

    let history = fs::read_to_string(out.join("student_metrics.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 3);
    for line in history.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in ["train_loss", "pred_loss", "spatial_loss", "temporal_loss", "val_mae"] {
            assert!(rec[key].as_f64().unwrap().is_finite(), "{key} in {line}");
        }
    }

    let bench = read_json(&out.join("bench_report.json"));
    assert!(bench["latency"]["speedup"].as_f64().unwrap() > 0.0);
    assert!(bench["self_check_ratio"].as_f64().is_some());
    assert_eq!(bench["latency"]["teacher"]["samples_ns"].as_array().unwrap().len(), 30);

    let csv = fs::read_to_string(out.join("oversmoothing.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("depth,mad"));
    assert_eq!(csv.lines().count(), 5);

    let eval = read_json(&out.join("eval_report.json"));
    assert!(eval["student"]["rmse"].as_f64().unwrap() >= eval["student"]["mae"].as_f64().unwrap());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    for cmd in ["gen-data", "train-teacher"] {
        assert!(stkd(&[cmd], &config, &[]).status.success());
    }
    let first = out_dir(dir.path());
    let resolved = first.join("config.resolved.json");
    for cmd in ["gen-data", "train-teacher"] {
        assert!(stkd(&[cmd], &resolved, &[]).status.success());
    }
    let second = first.join("out");
    for f in ["readings.csv", "teacher.ckpt", "teacher_metrics.jsonl", "config.resolved.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    assert!(stkd(&["train-teacher"], &config, &[]).status.success());
    let a = fs::read(out_dir(dir.path()).join("teacher.ckpt")).unwrap();
    assert!(stkd(&["train-teacher", "--seed", "7"], &config, &[]).status.success());
    let b = fs::read(out_dir(dir.path()).join("teacher.ckpt")).unwrap();
    assert_ne!(a, b);
    let resolved = read_json(&out_dir(dir.path()).join("config.resolved.json"));
    assert_eq!(resolved["seed"], 7);
}

#[test]
fn divergence_exits_1_and_keeps_last_good() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.teacher.lr = 1e300;
    cfg.teacher.clip_norm = None;
    let config = write_config(dir.path(), &cfg);
    let out = stkd(&["train-teacher"], &config, &[]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir(dir.path()).join("teacher.ckpt.last_good").exists());
    assert!(!out_dir(dir.path()).join("teacher.ckpt").exists());
}
