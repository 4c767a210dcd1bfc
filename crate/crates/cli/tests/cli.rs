//! End-to-end checks of the binary: exit codes, artifacts, table output.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shillbench"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.yaml");
    let out = dir.join("runs");
    let cache = dir.join("cache");
    std::fs::write(
        &path,
        format!(
            r#"
seed: 3
out_dir: {out:?}
cache_dir: {cache:?}
dataset:
  name: uniform
  synth: {{ n_users: 40, n_items: 30, n_interactions: 700 }}
attack:
  name: random
  attack_size: 5
  filler_size: 8
  targets: {{ items: [4] }}
victim:
  train: {{ d: 8, epochs: 10 }}
"#
        ),
    )
    .unwrap();
    path
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_writes_artifacts_and_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    run_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("uniform_random_mf_pointwise_seed3"), "{stdout}");
    assert!(stdout.contains("rmse"), "{stdout}");
    let run_dir = dir.path().join("runs/uniform_random_mf_pointwise_seed3");
    for file in [
        "resolved_config.yaml",
        "reports.json",
        "table.txt",
        "run.log",
        "model_clean.json",
        "model_attacked.json",
    ] {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--set", "victim.dropout=0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("victim"), "{stderr}");
}

#[test]
fn stage_failure_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--set", "dataset.source=file"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let failure = dir
        .path()
        .join("runs/uniform_random_mf_pointwise_seed3/failure.json");
    assert!(failure.is_file());
}

#[test]
fn grid_runs_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--grid", "seed=1,2"])
        .output()
        .unwrap();
    run_ok(&out);
    assert!(dir.path().join("runs/uniform_random_mf_pointwise_seed1").is_dir());
    assert!(dir.path().join("runs/uniform_random_mf_pointwise_seed2").is_dir());
}

#[test]
fn attack_only_exports_a_labeled_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = bin()
        .args(["attack-only", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    run_ok(&out);
    let tsv = dir.path().join("runs/uniform_random_seed3_attacked.tsv");
    assert!(tsv.is_file());
    let text = std::fs::read_to_string(&tsv).unwrap();
    assert!(text.lines().any(|l| l.ends_with("\tfake")));
}

#[test]
fn report_rerenders_from_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    run_ok(&bin().args(["run", "--config"]).arg(&config).output().unwrap());
    let runs = dir.path().join("runs");
    let table_path = runs.join("uniform_random_mf_pointwise_seed3/table.txt");
    let before = std::fs::read_to_string(&table_path).unwrap();
    std::fs::remove_file(&table_path).unwrap();
    let out = bin().args(["report", "--dir"]).arg(&runs).output().unwrap();
    run_ok(&out);
    let after = std::fs::read_to_string(&table_path).unwrap();
    assert_eq!(before, after);
    assert!(String::from_utf8_lossy(&out.stdout).contains("condition"));
}
