use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{read_toml, AnalyzeConfig, DataSection, GradCheckConfig, RunConfig};
use super::{
    finish, timestamp, write_file, AblateArgs, AnalyzeArgs, CliError, GenDataArgs, GradCheckArgs, Outcome, Overrides,
    RunManifest, TrainArgs, ABLATION_JSON, ABLATION_TABLE, CHECKPOINT_FILE, GRAD_CHECK_FILE, LOG_FILE, METRICS_FILE,
    PLANTED_FILE, TEST_FILE, TRAIN_FILE, VALID_FILE,
};
use crate::analysis::{analyze as analyze_shifts, export_analysis, AnalysisError, PatternRule};
use crate::data::{
    generate_synthetic, load_dataset, to_jsonl_line, AlignedUtterance, DataError, EmbeddingTable, Label,
    LoadOptions, SyntheticSpec,
};
use crate::model::{Ablation, ModelConfig, ModelError, RavenModel};
use crate::nn::NnError;
use crate::tensor::{grad_check_with_hook, GradCheckReport, Tape, Tensor, Var};
use crate::training::{evaluate, loss, train as train_model, Evaluation, TrainConfig, TrainError};

/// Console output; a closed stdout is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Nn(NnError::Tensor(_)) => CliError::Runtime(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Model(m) => model_error(m),
        TrainError::Metrics(m) => CliError::Runtime(m.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Model(m) => model_error(m),
        e @ (AnalysisError::UnsupportedAblation(_) | AnalysisError::Empty | AnalysisError::TooFewPoints { .. }) => {
            CliError::Invalid(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    bytes
}

// ---------------------------------------------------------------- gen-data

pub(super) fn cmd_gen_data(args: &GenDataArgs) -> Result<RunManifest, CliError> {
    let mut spec: SyntheticSpec = match &args.config {
        Some(p) => read_toml(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    gen_data(&spec, &args.out)
}

/// Writes the three splits and the planted ground truth into `out`.
pub fn gen_data(spec: &SyntheticSpec, out: &Path) -> Result<RunManifest, CliError> {
    let started = timestamp();
    spec.validate().map_err(invalid)?;
    let splits = generate_synthetic(spec).map_err(invalid)?;
    let mut artifacts = Vec::new();
    for (name, split) in [(TRAIN_FILE, &splits.train), (VALID_FILE, &splits.valid), (TEST_FILE, &splits.test)] {
        let mut buf = String::new();
        for u in split {
            buf.push_str(&to_jsonl_line(u));
            buf.push('\n');
        }
        artifacts.push(write_file(&out.join(name), buf.as_bytes())?);
    }
    artifacts.push(write_file(&out.join(PLANTED_FILE), &json_bytes(&splits.planted))?);
    say!(
        "generated {} / {} / {} utterances into {}",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        out.display()
    );
    finish(out, "gen-data", Some(spec.seed), spec, artifacts, started, Outcome::Ok)
}

// ---------------------------------------------------------------- data

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<AlignedUtterance>,
    pub valid: Vec<AlignedUtterance>,
    pub test: Option<Vec<AlignedUtterance>>,
}

impl Splits {
    /// Embedding, visual and acoustic widths of the first training utterance.
    fn dims(&self) -> Result<(usize, usize, usize), CliError> {
        let u = self
            .train
            .first()
            .ok_or_else(|| CliError::Invalid("train split is empty".into()))?;
        Ok((u.embeddings[0].len(), u.visual[0].cols(), u.acoustic[0].cols()))
    }
}

fn load_table(path: Option<&Path>, dim: Option<usize>) -> Result<Option<EmbeddingTable>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let dim = dim.ok_or_else(|| CliError::Invalid("data.embeddings needs model.embedding_dim".into()))?;
    EmbeddingTable::load(path, dim).map(Some).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_file(path: &Path, opts: &LoadOptions<'_>) -> Result<Vec<AlignedUtterance>, CliError> {
    load_dataset(path, opts).map_err(|e| match e {
        DataError::Io { .. } => invalid(e),
        other => invalid(format!("{}: {other}", path.display())),
    })
}

/// Loads `train.jsonl`, `valid.jsonl` and, when present, `test.jsonl`.
pub fn load_splits(
    dir: &Path,
    data: &DataSection,
    dims: (Option<usize>, Option<usize>, Option<usize>),
) -> Result<Splits, CliError> {
    let table = load_table(data.embeddings.as_deref(), dims.0)?;
    let opts = LoadOptions {
        embeddings: table.as_ref(),
        visual_dim: dims.1,
        acoustic_dim: dims.2,
    };
    let test_path = dir.join(TEST_FILE);
    Ok(Splits {
        train: load_file(&dir.join(TRAIN_FILE), &opts)?,
        valid: load_file(&dir.join(VALID_FILE), &opts)?,
        test: if test_path.exists() {
            Some(load_file(&test_path, &opts)?)
        } else {
            None
        },
    })
}

// ---------------------------------------------------------------- train

/// Everything `train` needs, after config files and flags are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedTrain {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data_dir: PathBuf,
    pub data: DataSection,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub ablation: Ablation,
    pub best_epoch: Option<usize>,
    pub best_valid_loss: Option<f64>,
    pub epochs_run: usize,
    pub skipped_steps: u64,
    pub valid: Evaluation,
    pub test: Option<Evaluation>,
}

fn apply_overrides(model: &mut ModelConfig, train: &mut TrainConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        model.seed = seed;
        train.seed = seed;
    }
    if let Some(beta) = o.beta {
        model.beta = beta;
    }
    if let Some(n) = o.parallel_eval {
        train.eval_threads = n;
    }
}

fn load_checkpoint(path: &Path) -> Result<RavenModel, CliError> {
    RavenModel::load(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn resolve_train(
    cfg: &RunConfig,
    data_dir: &Path,
    ablation: Option<Ablation>,
    resume: Option<&Path>,
    overrides: &Overrides,
) -> Result<(ResolvedTrain, Splits), CliError> {
    cfg.train.validate().map_err(train_error)?;
    let m = &cfg.model;
    let splits = load_splits(data_dir, &cfg.data, (m.embedding_dim, m.visual_dim, m.acoustic_dim))?;
    let mut model = match resume {
        Some(p) => load_checkpoint(p)?.config().clone(),
        None => {
            let (e, v, a) = splits.dims()?;
            m.resolve(e, v, a)
        }
    };
    if let Some(a) = ablation {
        if resume.is_some() && a != model.ablation {
            return Err(CliError::Invalid(format!(
                "--ablation {a} conflicts with the checkpoint's `{}`",
                model.ablation
            )));
        }
        model.ablation = a;
    }
    let mut train = cfg.train.clone();
    apply_overrides(&mut model, &mut train, overrides);
    model.validate().map_err(invalid)?;
    train.validate().map_err(train_error)?;
    Ok((
        ResolvedTrain {
            model,
            train,
            data_dir: data_dir.to_path_buf(),
            data: cfg.data.clone(),
            resume: resume.map(Path::to_path_buf),
        },
        splits,
    ))
}

fn read_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    path.map_or_else(|| Ok(RunConfig::default()), read_toml)
}

pub(super) fn cmd_train(args: &TrainArgs) -> Result<RunManifest, CliError> {
    let started = timestamp();
    let cfg = read_run_config(args.config.as_deref())?;
    let (resolved, splits) = resolve_train(&cfg, &args.data, args.ablation, args.resume.as_deref(), &args.overrides)?;
    let (manifest, _) = train_with(&resolved, &splits, &args.out, started)?;
    Ok(manifest)
}

/// Loads the data named in `resolved` and trains.
pub fn train(resolved: &ResolvedTrain, out: &Path) -> Result<(RunManifest, TrainSummary), CliError> {
    let started = timestamp();
    let m = &resolved.model;
    let splits = load_splits(
        &resolved.data_dir,
        &resolved.data,
        (Some(m.embedding_dim), Some(m.visual_dim), Some(m.acoustic_dim)),
    )?;
    train_with(resolved, &splits, out, started)
}

fn build_model(resolved: &ResolvedTrain) -> Result<RavenModel, CliError> {
    match &resolved.resume {
        Some(path) => {
            let mut model = load_checkpoint(path)?;
            model.set_beta(resolved.model.beta).map_err(model_error)?;
            if model.config() != &resolved.model {
                return Err(CliError::Invalid(format!(
                    "{}: checkpoint config differs from the resolved model config",
                    path.display()
                )));
            }
            Ok(model)
        }
        None => RavenModel::new(resolved.model.clone()).map_err(model_error),
    }
}

fn train_with(
    resolved: &ResolvedTrain,
    splits: &Splits,
    out: &Path,
    started: String,
) -> Result<(RunManifest, TrainSummary), CliError> {
    let model = build_model(resolved)?;
    for u in splits.test.iter().flatten() {
        model.check_utterance(u).map_err(model_error)?;
    }
    let cfg = &resolved.train;
    let outcome = train_model(model, &splits.train, &splits.valid, cfg).map_err(train_error)?;
    let valid = evaluate(&outcome.model, &splits.valid, cfg.eval_threads, &cfg.metrics).map_err(train_error)?;
    let test = match &splits.test {
        Some(t) if !t.is_empty() => {
            Some(evaluate(&outcome.model, t, cfg.eval_threads, &cfg.metrics).map_err(train_error)?)
        }
        _ => None,
    };
    let summary = TrainSummary {
        ablation: resolved.model.ablation,
        best_epoch: outcome.best_epoch,
        best_valid_loss: outcome.best_valid_loss,
        epochs_run: outcome.epochs_run,
        skipped_steps: outcome.skipped_steps,
        valid,
        test,
    };
    let artifacts = vec![
        write_file(&out.join(CHECKPOINT_FILE), &outcome.model.to_checkpoint_bytes())?,
        write_file(&out.join(LOG_FILE), outcome.log_jsonl().as_bytes())?,
        write_file(&out.join(METRICS_FILE), &json_bytes(&summary))?,
    ];
    let shown = summary.test.as_ref().unwrap_or(&summary.valid);
    say!(
        "{}: {} epochs, best {:?}, {} MAE {:.4} Acc-2 {}",
        resolved.model.ablation,
        summary.epochs_run,
        summary.best_epoch,
        if summary.test.is_some() { "test" } else { "valid" },
        shown.metrics.mae,
        fmt_opt(shown.metrics.acc2)
    );
    let manifest = finish(out, "train", Some(resolved.model.seed), resolved, artifacts, started, Outcome::Ok)?;
    Ok((manifest, summary))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedAblate {
    /// Shared settings; its ablation is replaced per variant.
    pub base: ResolvedTrain,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Ablation,
    pub mae: f64,
    pub pearson: Option<f64>,
    pub acc2: Option<f64>,
    pub acc7: Option<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// Split the rows were measured on.
    pub split: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: Ablation) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<14}{:>8}{:>8}{:>8}{:>8}   ({} split)\n",
            "variant", "MAE", "Corr", "Acc-2", "Acc-7", self.split
        );
        let cell = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14}{:>8.3}{:>8}{:>8}{:>8}",
                r.variant.as_str(),
                r.mae,
                cell(r.pearson),
                cell(r.acc2),
                cell(r.acc7)
            );
        }
        s
    }
}

pub(super) fn cmd_ablate(args: &AblateArgs) -> Result<RunManifest, CliError> {
    let started = timestamp();
    if args.jobs == 0 {
        return Err(CliError::Invalid("--jobs must be at least 1".into()));
    }
    let cfg = read_run_config(args.config.as_deref())?;
    let (base, splits) = resolve_train(&cfg, &args.data, None, None, &args.overrides)?;
    let resolved = ResolvedAblate { base, jobs: args.jobs };
    Ok(ablate_with(&resolved, &splits, &args.out, started)?.0)
}

pub fn ablate(resolved: &ResolvedAblate, out: &Path) -> Result<(RunManifest, AblationTable), CliError> {
    let started = timestamp();
    let m = &resolved.base.model;
    let splits = load_splits(
        &resolved.base.data_dir,
        &resolved.base.data,
        (Some(m.embedding_dim), Some(m.visual_dim), Some(m.acoustic_dim)),
    )?;
    ablate_with(resolved, &splits, out, started)
}

fn ablate_with(
    resolved: &ResolvedAblate,
    splits: &Splits,
    out: &Path,
    started: String,
) -> Result<(RunManifest, AblationTable), CliError> {
    if resolved.base.resume.is_some() {
        return Err(CliError::Invalid("ablate trains from scratch; resume is not supported".into()));
    }
    let variants: Vec<ResolvedTrain> = Ablation::ALL
        .iter()
        .map(|&a| {
            let mut r = resolved.base.clone();
            r.model.ablation = a;
            r
        })
        .collect();
    for v in &variants {
        v.model.validate().map_err(invalid)?;
    }
    let run_one = |v: &ResolvedTrain| train_with(v, splits, &out.join(v.model.ablation.as_str()), timestamp());
    let jobs = resolved.jobs.clamp(1, variants.len());
    let results: Vec<Result<(RunManifest, TrainSummary), CliError>> = if jobs == 1 {
        variants.iter().map(run_one).collect()
    } else {
        let chunk = variants.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = variants
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run_one).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("ablation worker panicked"))
                .collect()
        })
    };
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut split = "test";
    for r in results {
        let (manifest, summary) = r?;
        artifacts.extend(manifest.artifacts);
        let eval = match &summary.test {
            Some(t) => t,
            None => {
                split = "valid";
                &summary.valid
            }
        };
        rows.push(AblationRow {
            variant: summary.ablation,
            mae: eval.metrics.mae,
            pearson: eval.metrics.pearson,
            acc2: eval.metrics.acc2,
            acc7: eval.metrics.acc7,
            best_epoch: summary.best_epoch,
        });
    }
    let table = AblationTable {
        split: split.to_string(),
        rows,
    };
    let text = table.to_text();
    say!("{}", text.trim_end());
    artifacts.push(write_file(&out.join(ABLATION_JSON), &json_bytes(&table))?);
    artifacts.push(write_file(&out.join(ABLATION_TABLE), text.as_bytes())?);
    let manifest = finish(out, "ablate", Some(resolved.base.model.seed), resolved, artifacts, started, Outcome::Ok)?;
    Ok((manifest, table))
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedAnalyze {
    pub checkpoint: PathBuf,
    /// The JSONL file analysed.
    pub data: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub beta: Option<f64>,
    pub rule: PatternRule,
}

pub(super) fn cmd_analyze(args: &AnalyzeArgs) -> Result<RunManifest, CliError> {
    let cfg: AnalyzeConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => AnalyzeConfig::default(),
    };
    let data = if args.data.is_dir() {
        args.data.join(TRAIN_FILE)
    } else {
        args.data.clone()
    };
    let resolved = ResolvedAnalyze {
        checkpoint: args.checkpoint.clone(),
        data,
        embeddings: cfg.data.embeddings,
        beta: args.beta,
        rule: cfg.analysis,
    };
    analyze(&resolved, &args.out)
}

pub fn analyze(resolved: &ResolvedAnalyze, out: &Path) -> Result<RunManifest, CliError> {
    let started = timestamp();
    let rule = &resolved.rule;
    if !(rule.tau.is_finite() && rule.tau >= 0.0) {
        return Err(CliError::Invalid("analysis.tau must be a nonnegative number".into()));
    }
    let mut model = load_checkpoint(&resolved.checkpoint)?;
    if let Some(beta) = resolved.beta {
        model.set_beta(beta).map_err(model_error)?;
    }
    let ablation = model.config().ablation;
    if !ablation.shifts() {
        return Err(analysis_error(AnalysisError::UnsupportedAblation(ablation)));
    }
    let cfg = model.config();
    let table = load_table(resolved.embeddings.as_deref(), Some(cfg.embedding_dim))?;
    let opts = LoadOptions {
        embeddings: table.as_ref(),
        visual_dim: Some(cfg.visual_dim),
        acoustic_dim: Some(cfg.acoustic_dim),
    };
    let data = load_file(&resolved.data, &opts)?;
    let analysis = analyze_shifts(&model, &data, rule).map_err(analysis_error)?;
    let (summary, points) = export_analysis(&analysis, out).map_err(analysis_error)?;
    let mut counts = std::collections::BTreeMap::new();
    for w in &analysis.words {
        *counts.entry(format!("{:?}", w.pattern)).or_insert(0usize) += 1;
    }
    say!("analysed {} words over {} points: {counts:?}", analysis.words.len(), analysis.points.len());
    finish(out, "analyze", Some(model.config().seed), resolved, vec![summary, points], started, Outcome::Ok)
}

// ---------------------------------------------------------------- grad-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedGradCheck {
    pub config: GradCheckConfig,
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckVariant {
    pub ablation: Ablation,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckOutput {
    pub passed: bool,
    pub max_rel_error: f64,
    pub parameters: usize,
    pub variants: Vec<GradCheckVariant>,
}

pub(super) fn cmd_grad_check(args: &GradCheckArgs) -> Result<RunManifest, CliError> {
    let mut config: GradCheckConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => GradCheckConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let resolved = ResolvedGradCheck {
        config,
        inject_fault: args.inject_fault,
    };
    Ok(grad_check(&resolved, &args.out)?.0)
}

fn toy_utterance(cfg: &GradCheckConfig) -> AlignedUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vector = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut frames = |dim: usize| {
        let rows: Vec<Vec<f64>> = (0..cfg.frames).map(|_| vector(dim)).collect();
        Tensor::from_rows(&rows).expect("rectangular frames")
    };
    let visual = (0..cfg.words).map(|_| frames(cfg.visual_dim)).collect();
    let acoustic = (0..cfg.words).map(|_| frames(cfg.acoustic_dim)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let embeddings = (0..cfg.words)
        .map(|_| Tensor::vector((0..cfg.embedding_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    AlignedUtterance {
        id: "grad-check".into(),
        words: (0..cfg.words).map(|i| format!("w{i}")).collect(),
        embeddings,
        visual,
        acoustic,
        label: Label::Regression(cfg.label),
    }
}

pub fn grad_check(resolved: &ResolvedGradCheck, out: &Path) -> Result<(RunManifest, GradCheckOutput), CliError> {
    let started = timestamp();
    let cfg = &resolved.config;
    cfg.validate()?;
    for &a in &cfg.ablations {
        cfg.model_config(a).validate().map_err(invalid)?;
    }
    let utt = toy_utterance(cfg);
    let mut variants = Vec::new();
    let mut parameters = 0;
    for (k, &ablation) in cfg.ablations.iter().enumerate() {
        let mut model = RavenModel::new(cfg.model_config(ablation)).map_err(model_error)?;
        let frozen = model.clone();
        let fault = resolved.inject_fault && k == 0;
        let report = grad_check_with_hook(
            model.params_mut(),
            |tape: &mut Tape, params: &[Var]| -> Result<Var, TrainError> {
                let out = frozen.forward(tape, params, &utt)?;
                loss(tape, out.prediction, &utt.label, frozen.config().task)
            },
            cfg.step,
            cfg.tolerance,
            |grads| {
                if fault {
                    if let Some(g) = grads.iter_mut().find_map(|g| g.first_mut()) {
                        *g = 2.0 * *g + 1.0;
                    }
                }
            },
        )
        .map_err(train_error)?;
        parameters += report.entries.iter().map(|e| e.elements).sum::<usize>();
        variants.push(GradCheckVariant { ablation, report });
    }
    let output = GradCheckOutput {
        passed: variants.iter().all(|v| v.report.passed()),
        max_rel_error: variants.iter().map(|v| v.report.max_rel_error()).fold(0.0, f64::max),
        parameters,
        variants,
    };
    say!(
        "grad-check: {} scalars, max relative error {:.3e} (tolerance {:.0e}): {}",
        output.parameters,
        output.max_rel_error,
        cfg.tolerance,
        if output.passed { "pass" } else { "FAIL" }
    );
    for v in &output.variants {
        for e in v.report.failures() {
            say!(
                "  {} {}[{}]: autodiff {:e} numeric {:e} (rel {:.3e})",
                v.ablation, e.name, e.worst_index, e.autodiff, e.numeric, e.max_rel_error
            );
        }
    }
    let artifact = write_file(&out.join(GRAD_CHECK_FILE), &json_bytes(&output))?;
    let outcome = if output.passed {
        Outcome::Ok
    } else {
        Outcome::GradCheckFailed
    };
    let manifest = finish(out, "grad-check", Some(cfg.seed), resolved, vec![artifact], started, outcome)?;
    Ok((manifest, output))
}

// ---------------------------------------------------------------- replay

fn recorded<T: for<'de> Deserialize<'de>>(manifest: &RunManifest) -> Result<T, CliError> {
    serde_json::from_value(manifest.config.clone())
        .map_err(|e| CliError::Invalid(format!("manifest config for `{}`: {e}", manifest.command)))
}

/// Reruns the command recorded in `manifest`, writing into `out`.
pub fn replay(manifest: &RunManifest, out: &Path) -> Result<RunManifest, CliError> {
    match manifest.command.as_str() {
        "gen-data" => gen_data(&recorded(manifest)?, out),
        "train" => Ok(train(&recorded(manifest)?, out)?.0),
        "ablate" => Ok(ablate(&recorded(manifest)?, out)?.0),
        "analyze" => analyze(&recorded(manifest)?, out),
        "grad-check" => Ok(grad_check(&recorded(manifest)?, out)?.0),
        other => Err(CliError::Invalid(format!("manifest names unknown command `{other}`"))),
    }
}
