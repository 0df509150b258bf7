//! Runs the `raven` binary as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn raven(dir: &Path, args: &[&str], log: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_raven"));
    cmd.current_dir(dir).args(args).env_remove("RAVEN_LOG_LEVEL");
    if let Some(level) = log {
        cmd.env("RAVEN_LOG_LEVEL", level);
    }
    cmd.output().unwrap()
}

const SPEC: &str = "train_size = 20\nvalid_size = 6\ntest_size = 6\n";

const RUN: &str = r#"
[model]
visual_hidden = 3
acoustic_hidden = 3
utterance_hidden = 4

[train]
epochs = 1
batch_size = 4
"#;

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.toml"), SPEC).unwrap();
    fs::write(d.join("run.toml"), RUN).unwrap();

    let out = raven(d, &["gen-data", "--config", "spec.toml", "--out", "data"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("data/manifest.json").exists());

    let out = raven(d, &["train", "--config", "run.toml", "--data", "data", "--out", "t"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("t/model.ckpt").exists());

    let out = raven(d, &["train", "--config", "run.toml", "--data", "nowhere", "--out", "t2"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    assert!(!d.join("t2").exists());

    assert_eq!(raven(d, &["train", "--bogus"], None).status.code(), Some(1));
    assert_eq!(raven(d, &[], None).status.code(), Some(1));
    assert_eq!(raven(d, &["--help"], None).status.code(), Some(0));

    let gc = raven(d, &["grad-check", "--out", "g", "--inject-fault"], None);
    assert_eq!(gc.status.code(), Some(3));
}

#[test]
fn log_level_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.toml"), SPEC).unwrap();
    let args = ["gen-data", "--config", "spec.toml", "--out", "data"];

    let out = raven(d, &args, Some("loud"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RAVEN_LOG_LEVEL"));
    assert!(!d.join("data").exists());

    let out = raven(d, &args, Some("debug"));
    assert_eq!(out.status.code(), Some(0));
}
