//! End-to-end CLI behavior on a miniature dataset: the full command chain,
//! idempotence, exit codes and flag overrides.

use std::path::Path;
use std::process::{Command, Output};

fn acsloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acsloc"))
        .args(args)
        .current_dir(dir)
        .env("ACSLOC_THREADS", "2")
        .output()
        .expect("binary runs")
}

const TINY_CONFIG: &str = r#"
seed = 7
out_dir = "run"

[synth]
num_classes = 2
train_videos = 8
test_videos = 4
t_min = 40
t_max = 50
feature_dim = 6

[train]
epochs = 4
batch_size = 4
hidden = 8
checkpoint_interval = 2

[localize]
variant = 4

[eval]
grid = "thumos"
"#;

fn write_config(dir: &Path) {
    std::fs::write(dir.join("run.toml"), TINY_CONFIG).unwrap();
}

#[test]
fn full_chain_produces_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path());
    for cmd in ["synth", "train", "infer", "localize", "eval"] {
        let out = acsloc(&[cmd, "--config", "run.toml"], tmp.path());
        assert!(
            out.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let run = tmp.path().join("run");
    for artifact in [
        "manifest.json",
        "config_resolved.toml",
        "checkpoint.bin",
        "losses.csv",
        "detections.jsonl",
        "eval_report.json",
        "eval_report.csv",
    ] {
        assert!(run.join(artifact).exists(), "missing {artifact}");
    }
    assert!(run.join("dump").read_dir().unwrap().count() == 4);
}

#[test]
fn rerun_synth_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path());
    assert!(acsloc(&["synth", "--config", "run.toml"], tmp.path()).status.success());
    let manifest = std::fs::read(tmp.path().join("run/manifest.json")).unwrap();
    let sample = std::fs::read(tmp.path().join("run/train_0000.rgb.f32")).unwrap();
    assert!(acsloc(&["synth", "--config", "run.toml"], tmp.path()).status.success());
    assert_eq!(manifest, std::fs::read(tmp.path().join("run/manifest.json")).unwrap());
    assert_eq!(sample, std::fs::read(tmp.path().join("run/train_0000.rgb.f32")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "seed = 7\nmystery_key = 1\n").unwrap();
    let out = acsloc(&["synth", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(tmp.path().join("bad2.toml"), "[train]\nepochs = 0\n").unwrap();
    let out = acsloc(&["synth", "--config", "bad2.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    // clap usage errors share the config exit code
    let out = acsloc(&["localize", "--config"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_3_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path());
    // train before synth: no manifest yet
    let out = acsloc(&["train", "--config", "run.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("manifest.json"), "stderr must name the missing path: {stderr}");

    // infer before train: no checkpoint
    assert!(acsloc(&["synth", "--config", "run.toml"], tmp.path()).status.success());
    let out = acsloc(&["infer", "--config", "run.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checkpoint.bin"), "stderr: {stderr}");
}

#[test]
fn variant_and_grid_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path());
    for cmd in ["synth", "train", "infer"] {
        assert!(acsloc(&[cmd, "--config", "run.toml"], tmp.path()).status.success());
    }
    let out = acsloc(
        &["localize", "--config", "run.toml", "--variant", "0"],
        tmp.path(),
    );
    assert!(out.status.success());
    let out = acsloc(
        &["eval", "--config", "run.toml", "--grid", "anet"],
        tmp.path(),
    );
    assert!(out.status.success());
    let report = std::fs::read_to_string(tmp.path().join("run/eval_report.json")).unwrap();
    assert!(report.contains("0.95"), "anet grid must reach 0.95");

    let out = acsloc(
        &["localize", "--config", "run.toml", "--variant", "9"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_on_empty_detections_reports_zero_map() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path());
    for cmd in ["synth", "train", "infer"] {
        assert!(acsloc(&[cmd, "--config", "run.toml"], tmp.path()).status.success());
    }
    std::fs::write(tmp.path().join("run/detections.jsonl"), "").unwrap();
    let out = acsloc(&["eval", "--config", "run.toml"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("average mAP = 0.0000"), "stdout: {stdout}");
}

#[test]
fn verify_command_prints_table_and_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = acsloc(&["verify"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "verify failed:\n{stdout}");
    assert!(stdout.contains("grad total loss"));
    assert!(stdout.contains("ap oracle"));
    assert!(stdout.contains("all") && stdout.contains("checks passed"));
}
