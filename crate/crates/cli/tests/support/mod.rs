#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_hyposcreen");

pub fn hyposcreen(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("HYPOSCREEN_THREADS")
        .output()
        .expect("binary runs")
}

pub fn hyposcreen_env(dir: &Path, args: &[&str], threads: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("HYPOSCREEN_THREADS", threads)
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small booster grid and inner folds so end-to-end runs take well under a
/// second.
pub const QUICK_CONFIG: &str = r#"{
  "booster_grid": {
    "base": { "n_trees": 15 },
    "learning_rate": [0.1, 0.3],
    "max_leaves": [4],
    "min_samples_leaf": [5]
  },
  "ensemble": { "m": 2, "inner_folds": 2 },
  "selection": { "n_features": 3 },
  "smote": { "k_neighbors": 3 },
  "cv_folds": 3
}"#;

pub fn write_quick_config(dir: &Path) {
    std::fs::write(dir.join("quick.json"), QUICK_CONFIG).unwrap();
}

pub fn last_stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error record");
    serde_json::from_str(line).unwrap()
}
