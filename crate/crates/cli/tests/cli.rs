use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ntfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntfa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ntfa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_fit_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (d, m, metrics) = (dir.path().join("d"), dir.path().join("m"), dir.path().join("metrics.json"));
    ok(&["synth", "--design", "default", "--out", p(&d), "--voxels", "125"]);
    ok(&["fit", "--data", p(&d), "--out", p(&m), "--heldout", "--epochs", "3"]);
    ok(&["eval", "--model", p(&m), "--data", p(&d), "--out", p(&metrics), "--particles", "5"]);
    let text = fs::read_to_string(&metrics).unwrap();
    assert!(text.contains("\"lr_lambda\": 0.01"));
    assert!(text.contains("\"epochs\": 3"));
    let csv = dir.path().join("e.csv");
    ok(&["embed", "--model", p(&m), "--data", p(&d), "--out", p(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 9 + 17);
}

#[test]
fn seeded_runs_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["--seed", "7", "synth", "--out", p(&d), "--voxels", "64"]);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let m = dir.path().join(format!("m{i}"));
        let metrics = dir.path().join(format!("metrics{i}.json"));
        ok(&["--seed", "7", "fit", "--data", p(&d), "--out", p(&m), "--heldout", "--epochs", "2"]);
        ok(&["--seed", "7", "eval", "--model", p(&m), "--data", p(&d), "--out", p(&metrics), "--particles", "3"]);
        outputs.push(fs::read(&metrics).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (d, m) = (dir.path().join("d"), dir.path().join("m"));
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 4\n[train]\nepochs = 1\nbatch_size = 16\n[model]\nfactors = 2\n").unwrap();
    ok(&["synth", "--out", p(&d), "--voxels", "27"]);
    ok(&["--config", p(&cfg), "fit", "--data", p(&d), "--out", p(&m), "--epochs", "2"]);
    let record = fs::read_to_string(m.join("config.json")).unwrap();
    assert!(record.contains("\"epochs\": 2"));
    assert!(record.contains("\"batch_size\": 16"));
    assert!(record.contains("\"seed\": 4"));
    assert!(record.contains("\"factors\": 2"));
}

#[test]
fn missing_dataset_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ntfa(&["fit", "--data", p(&dir.path().join("none")), "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(ntfa(&["bogus"]).status.code(), Some(1));
    assert_eq!(ntfa(&["fit"]).status.code(), Some(1));
    assert_eq!(ntfa(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[train]\nunknown_key = 1\n").unwrap();
    let out = ntfa(&["--config", p(&cfg), "synth", "--out", p(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analysis_commands_read_what_fit_writes() {
    let dir = tempfile::tempdir().unwrap();
    let (d, m) = (dir.path().join("d"), dir.path().join("m"));
    ok(&["synth", "--out", p(&d), "--voxels", "64"]);
    ok(&["fit", "--data", p(&d), "--out", p(&m), "--epochs", "2"]);
    let res = dir.path().join("r.csv");
    ok(&["mvpa", "--data", p(&d), "--model", p(&m), "--task-only", "--out", p(&res)]);
    assert!(fs::read_to_string(&res).unwrap().starts_with("class,fold,auc\n"));
    ok(&["fc", "--data", p(&d), "--model", p(&m), "--task-only", "--scheme", "kfold"]);
    ok(&["mvpa", "--data", p(&d), "--select", "10", "--task-only"]);
    ok(&["baseline", "pca", "--data", p(&d), "--out", p(&dir.path().join("pca.csv"))]);
    let h = dir.path().join("h.json");
    ok(&["baseline", "htfa", "--data", p(&d), "--out", p(&h), "--epochs", "2", "--particles", "3"]);
    assert!(fs::read_to_string(&h).unwrap().contains("\"model\": \"htfa\""));
}
