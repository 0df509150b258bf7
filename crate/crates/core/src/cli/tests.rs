use std::fs;
use std::path::{Path, PathBuf};

use super::*;
use crate::data::SyntheticSpec;

const TOY_CONFIG: &str = r#"
[model]
visual_hidden = 4
acoustic_hidden = 4
utterance_hidden = 6
seed = 3

[train]
epochs = 2
batch_size = 8
seed = 3
"#;

fn toy_spec() -> SyntheticSpec {
    SyntheticSpec {
        train_size: 24,
        valid_size: 8,
        test_size: 8,
        ..SyntheticSpec::default()
    }
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        let spec = toml::to_string(&toy_spec()).unwrap();
        fs::write(f.path("spec.toml"), spec).unwrap();
        fs::write(f.path("run.toml"), TOY_CONFIG).unwrap();
        assert_eq!(f.run(&["gen-data", "--config", "@spec.toml", "--out", "@data"]), 0);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs the CLI; arguments starting with `@` are paths in the fixture.
    fn run(&self, args: &[&str]) -> u8 {
        let mut full = vec!["raven".to_string()];
        for a in args {
            full.push(match a.strip_prefix('@') {
                Some(rel) => self.path(rel).display().to_string(),
                None => a.to_string(),
            });
        }
        run(full)
    }

    fn read(&self, rel: &str) -> Vec<u8> {
        fs::read(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }

    fn manifest(&self, rel: &str) -> RunManifest {
        RunManifest::load(&self.path(rel)).unwrap()
    }
}

fn lines(bytes: &[u8]) -> usize {
    bytes.iter().filter(|&&b| b == b'\n').count()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn gen_data_writes_counts_and_is_repeatable() {
    let f = Fixture::new();
    assert_eq!(lines(&f.read("data/train.jsonl")), 24);
    assert_eq!(lines(&f.read("data/valid.jsonl")), 8);
    assert_eq!(lines(&f.read("data/test.jsonl")), 8);
    let m = f.manifest("data/manifest.json");
    assert_eq!(m.command, "gen-data");
    assert_eq!(m.artifacts.len(), 5);

    assert_eq!(f.run(&["gen-data", "--config", "@spec.toml", "--out", "@again"]), 0);
    for name in [TRAIN_FILE, VALID_FILE, TEST_FILE, PLANTED_FILE] {
        assert_eq!(f.read(&format!("data/{name}")), f.read(&format!("again/{name}")), "{name}");
    }
}

#[test]
fn invalid_spec_is_rejected_without_output() {
    let f = Fixture::new();
    fs::write(f.path("bad.toml"), "snr = 0.0\n").unwrap();
    assert_eq!(f.run(&["gen-data", "--config", "@bad.toml", "--out", "@bad"]), 1);
    assert!(!f.path("bad").exists());

    fs::write(f.path("typo.toml"), "snrr = 2.0\n").unwrap();
    assert_eq!(f.run(&["gen-data", "--config", "@typo.toml", "--out", "@typo"]), 1);
    assert!(!f.path("typo").exists());
}

#[test]
fn unknown_config_key_and_bad_flags_exit_one() {
    let f = Fixture::new();
    fs::write(f.path("typo.toml"), "[train]\nlearning_rat = 0.1\n").unwrap();
    assert_eq!(f.run(&["train", "--config", "@typo.toml", "--data", "@data", "--out", "@o"]), 1);
    assert_eq!(f.run(&["train", "--data", "@data", "--out", "@o", "--ablation", "half"]), 1);
    assert_eq!(f.run(&["train", "--data", "@data"]), 1);
    assert!(!f.path("o").exists());
    assert_eq!(run(["raven", "--help"]), 0);
}

#[test]
fn dimension_mismatch_is_reported_before_training() {
    let f = Fixture::new();
    fs::write(f.path("wide.toml"), format!("{TOY_CONFIG}\n[data]\n").replace("[model]", "[model]\nvisual_dim = 7"))
        .unwrap();
    assert_eq!(f.run(&["train", "--config", "@wide.toml", "--data", "@data", "--out", "@o"]), 1);
    assert!(!f.path("o").exists());
}

#[test]
fn train_emits_artifacts_and_records_ablation() {
    let f = Fixture::new();
    let args = ["train", "--config", "@run.toml", "--data", "@data", "--out", "@t", "--ablation", "no_sub_shift"];
    assert_eq!(f.run(&args), 0);
    for name in [CHECKPOINT_FILE, LOG_FILE, METRICS_FILE, MANIFEST_FILE] {
        assert!(f.path("t").join(name).exists(), "{name}");
    }
    let m = f.manifest("t/manifest.json");
    assert_eq!(m.config["model"]["ablation"], "no_sub_shift");
    let model = crate::model::RavenModel::load(&f.path("t/model.ckpt")).unwrap();
    assert_eq!(model.config().ablation, Ablation::NoSubShift);
    assert_eq!(lines(&f.read("t/train_log.jsonl")), 4);
}

#[test]
fn resume_with_zero_epochs_reproduces_final_metrics() {
    let f = Fixture::new();
    assert_eq!(f.run(&["train", "--config", "@run.toml", "--data", "@data", "--out", "@t"]), 0);
    fs::write(f.path("zero.toml"), "[train]\nepochs = 0\n").unwrap();
    let args = ["train", "--config", "@zero.toml", "--data", "@data", "--out", "@r", "--resume", "@t/model.ckpt"];
    assert_eq!(f.run(&args), 0);
    let a = json(&f.read("t/metrics.json"));
    let b = json(&f.read("r/metrics.json"));
    assert_eq!(a["valid"], b["valid"]);
    assert_eq!(a["test"], b["test"]);
    assert_eq!(f.read("t/model.ckpt"), f.read("r/model.ckpt"));
}

#[test]
fn resume_rejects_conflicting_ablation() {
    let f = Fixture::new();
    assert_eq!(f.run(&["train", "--config", "@run.toml", "--data", "@data", "--out", "@t"]), 0);
    let args = ["train", "--data", "@data", "--out", "@r", "--resume", "@t/model.ckpt", "--ablation", "no_sub"];
    assert_eq!(f.run(&args), 1);
}

#[test]
fn training_is_repeatable_and_thread_independent() {
    let f = Fixture::new();
    assert_eq!(f.run(&["train", "--config", "@run.toml", "--data", "@data", "--out", "@a"]), 0);
    let args = ["train", "--config", "@run.toml", "--data", "@data", "--out", "@b", "--parallel-eval", "3"];
    assert_eq!(f.run(&args), 0);
    for name in [CHECKPOINT_FILE, LOG_FILE, METRICS_FILE] {
        assert_eq!(f.read(&format!("a/{name}")), f.read(&format!("b/{name}")), "{name}");
    }
}

#[test]
fn seed_and_beta_flags_override_config() {
    let f = Fixture::new();
    let args = ["train", "--config", "@run.toml", "--data", "@data", "--out", "@t", "--seed", "9", "--beta", "0.25"];
    assert_eq!(f.run(&args), 0);
    let m = f.manifest("t/manifest.json");
    assert_eq!(m.seed, Some(9));
    assert_eq!(m.config["model"]["seed"], 9);
    assert_eq!(m.config["train"]["seed"], 9);
    assert_eq!(m.config["model"]["beta"], 0.25);
}

#[test]
fn ablate_tabulates_four_variants_repeatably() {
    let f = Fixture::new();
    assert_eq!(f.run(&["ablate", "--config", "@run.toml", "--data", "@data", "--out", "@a"]), 0);
    assert_eq!(f.run(&["ablate", "--config", "@run.toml", "--data", "@data", "--out", "@b", "--jobs", "4"]), 0);
    let table: AblationTable = serde_json::from_slice(&f.read("a/ablation.json")).unwrap();
    let variants: Vec<Ablation> = table.rows.iter().map(|r| r.variant).collect();
    assert_eq!(variants, Ablation::ALL.to_vec());
    assert_eq!(table.split, "test");
    assert_eq!(f.read("a/ablation.json"), f.read("b/ablation.json"));
    assert_eq!(f.read("a/ablation.txt"), f.read("b/ablation.txt"));
    assert_eq!(lines(&f.read("a/ablation.txt")), 5);

    // Per-variant manifests differ only in the ablation flag.
    let base = f.manifest("a/full/manifest.json").config;
    for v in &Ablation::ALL[1..] {
        let mut other = f.manifest(&format!("a/{}/manifest.json", v.as_str())).config;
        assert_eq!(other["model"]["ablation"], v.as_str());
        other["model"]["ablation"] = base["model"]["ablation"].clone();
        assert_eq!(other, base);
    }
}

#[test]
fn analyze_exports_and_rejects_non_shifting_models() {
    let f = Fixture::new();
    assert_eq!(f.run(&["train", "--config", "@run.toml", "--data", "@data", "--out", "@full"]), 0);
    let args = ["analyze", "--checkpoint", "@full/model.ckpt", "--data", "@data", "--out", "@an"];
    assert_eq!(f.run(&args), 0);
    let summary = json(&f.read("an/shift_summary.json"));
    assert!(!summary["words"].as_array().unwrap().is_empty());
    assert!(f.read("an/shift_points.csv").starts_with(b"word,x,y,polarity,alpha,utterance_id\n"));

    let args = ["analyze", "--checkpoint", "@full/model.ckpt", "--data", "@data/valid.jsonl", "--out", "@an2"];
    assert_eq!(f.run(&args), 0);
    assert_ne!(f.read("an/shift_points.csv"), f.read("an2/shift_points.csv"));

    let train = ["train", "--config", "@run.toml", "--data", "@data", "--out", "@ns", "--ablation", "no_shift"];
    assert_eq!(f.run(&train), 0);
    let args = ["analyze", "--checkpoint", "@ns/model.ckpt", "--data", "@data", "--out", "@bad"];
    assert_eq!(f.run(&args), 1);
    assert!(!f.path("bad").exists());
}

#[test]
fn grad_check_passes_fails_on_fault_and_repeats() {
    let f = Fixture::new();
    assert_eq!(f.run(&["grad-check", "--out", "@g1"]), 0);
    assert_eq!(f.run(&["grad-check", "--out", "@g2"]), 0);
    assert_eq!(f.read("g1/grad_check.json"), f.read("g2/grad_check.json"));
    let report = json(&f.read("g1/grad_check.json"));
    assert_eq!(report["passed"], true);
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);

    assert_eq!(f.run(&["grad-check", "--out", "@bad", "--inject-fault"]), 3);
    let m = f.manifest("bad/manifest.json");
    assert_eq!(m.outcome, Outcome::GradCheckFailed);
    assert_eq!(json(&f.read("bad/grad_check.json"))["passed"], false);

    fs::write(f.path("gc.toml"), "ablations = []\n").unwrap();
    assert_eq!(f.run(&["grad-check", "--config", "@gc.toml", "--out", "@g3"]), 1);
}

fn replay_into(f: &Fixture, manifest: &str, out: &str) {
    assert_eq!(f.run(&["replay", "--manifest", manifest, "--out", out]), 0);
}

#[test]
fn manifests_replay_bitwise() {
    let f = Fixture::new();
    replay_into(&f, "@data/manifest.json", "@data2");
    for name in [TRAIN_FILE, VALID_FILE, TEST_FILE, PLANTED_FILE] {
        assert_eq!(f.read(&format!("data/{name}")), f.read(&format!("data2/{name}")));
    }

    let args = ["train", "--config", "@run.toml", "--data", "@data", "--out", "@t", "--seed", "4"];
    assert_eq!(f.run(&args), 0);
    replay_into(&f, "@t/manifest.json", "@t2");
    for name in [CHECKPOINT_FILE, LOG_FILE, METRICS_FILE] {
        assert_eq!(f.read(&format!("t/{name}")), f.read(&format!("t2/{name}")), "{name}");
    }
    let (a, b) = (f.manifest("t/manifest.json"), f.manifest("t2/manifest.json"));
    assert_eq!(a.config, b.config);

    let args = ["analyze", "--checkpoint", "@t/model.ckpt", "--data", "@data", "--out", "@an"];
    assert_eq!(f.run(&args), 0);
    replay_into(&f, "@an/manifest.json", "@an2");
    assert_eq!(f.read("an/shift_summary.json"), f.read("an2/shift_summary.json"));
    assert_eq!(f.read("an/shift_points.csv"), f.read("an2/shift_points.csv"));

    assert_eq!(f.run(&["grad-check", "--out", "@g", "--seed", "2"]), 0);
    replay_into(&f, "@g/manifest.json", "@g2");
    assert_eq!(f.read("g/grad_check.json"), f.read("g2/grad_check.json"));
}

#[test]
fn replay_rejects_unknown_command() {
    let f = Fixture::new();
    let mut m = f.manifest("data/manifest.json");
    m.command = "serve".into();
    assert!(matches!(replay(&m, Path::new("/nonexistent")), Err(CliError::Invalid(_))));
}

#[test]
fn ablation_table_text_is_aligned() {
    let table = AblationTable {
        split: "test".into(),
        rows: vec![
            AblationRow {
                variant: Ablation::Full,
                mae: 0.5,
                pearson: Some(0.75),
                acc2: Some(0.9),
                acc7: None,
                best_epoch: Some(3),
            },
            AblationRow {
                variant: Ablation::NoSubShift,
                mae: 1.25,
                pearson: None,
                acc2: Some(0.5),
                acc7: Some(0.125),
                best_epoch: None,
            },
        ],
    };
    let text = table.to_text();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[1], "full             0.500   0.750   0.900     n/a");
    assert_eq!(rows[2], "no_sub_shift     1.250     n/a   0.500   0.125");
    assert!(rows.iter().skip(1).all(|r| r.len() == rows[1].len()));
}
