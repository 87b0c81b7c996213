use std::path::Path;
use std::process::{Command, Output};

fn avfusion(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avfusion"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "fusion.gamma = 0.2\n").unwrap();
    let o = avfusion(&["--config", "bad.toml", "synth", "--out", "d", "--n", "4"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
    assert!(!dir.path().join("d").exists());
}

#[test]
fn inconsistent_fusion_weights_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "fusion.alpha = 0.5\nfusion.beta = 0.6\n").unwrap();
    let o = avfusion(&["--config", "c.toml", "synth", "--out", "d", "--n", "4"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn missing_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = avfusion(&["preprocess", "--manifest", "nope.jsonl", "--out", "p"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.jsonl"), "{}", stderr(&o));
}

#[test]
fn evaluate_without_training_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
    ok(avfusion(&["--profile", "desk", "synth", "--out", "raw", "--n", "10"], p));
    ok(avfusion(&["--profile", "desk", "preprocess", "--manifest", "raw/manifest.jsonl", "--out", "proc"], p));
    let o = avfusion(&["--profile", "desk", "evaluate", "--data", "proc/manifest.jsonl", "--run", "run", "--out", "eval"], p);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("run.json"), "{}", stderr(&o));
    let o = avfusion(&["--profile", "desk", "train", "--data", "proc/manifest.jsonl", "--run", "run", "--stage", "fusion"], p);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("audio stage"), "{}", stderr(&o));
}

#[test]
fn report_needs_a_readable_metrics_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.csv"), "model,metric,value\nfused,mae,notanumber\n").unwrap();
    let o = avfusion(&["report", "m.csv"], dir.path());
    assert!(!o.status.success());
}
