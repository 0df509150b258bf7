//! The `raven` command line. Every command validates its inputs before any
//! compute, writes artifacts atomically and finishes with `manifest.json`.

mod commands;
mod config;

pub use commands::{
    ablate, analyze, gen_data, grad_check, load_splits, replay, train, AblationRow, AblationTable, GradCheckOutput,
    ResolvedAblate, ResolvedAnalyze, ResolvedGradCheck, ResolvedTrain, Splits, TrainSummary,
};
pub use config::{read_toml, AnalyzeConfig, DataSection, GradCheckConfig, ModelSection, RunConfig};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::model::Ablation;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALID_FILE: &str = "valid.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const PLANTED_FILE: &str = "planted.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TABLE: &str = "ablation.txt";
pub const GRAD_CHECK_FILE: &str = "grad_check.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, data or arguments. Nothing was written.
    #[error("{0}")]
    Invalid(String),
    /// Failure while computing or writing results.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Ok,
    GradCheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::GradCheckFailed => 3,
        }
    }
}

/// Record of one command run. `config` holds the fully resolved settings,
/// including input paths, so `raven replay` can rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
    pub started: String,
    pub finished: String,
    pub outcome: Outcome,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf, CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

/// Writes `manifest.json` into `out` and returns the manifest.
pub(crate) fn finish<C: Serialize>(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
    mut artifacts: Vec<PathBuf>,
    started: String,
    outcome: Outcome,
) -> Result<RunManifest, CliError> {
    let path = out.join(MANIFEST_FILE);
    artifacts.push(path.clone());
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: serde_json::to_value(config).expect("config serializes"),
        artifacts,
        started,
        finished: timestamp(),
        outcome,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_file(&path, &bytes)?;
    Ok(manifest)
}

#[derive(Debug, Parser)]
#[command(name = "raven", version, about = "Multimodal word-embedding shifting: data, training and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate planted-signal train/valid/test splits.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Train all four ablation variants and tabulate them.
    Ablate(AblateArgs),
    /// Project shifted embeddings and tag word shift patterns.
    Analyze(AnalyzeArgs),
    /// Compare autodiff gradients with finite differences on a toy instance.
    GradCheck(GradCheckArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator spec (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct Overrides {
    /// Overrides both the model and the shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the shift threshold β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Worker threads for evaluation passes.
    #[arg(long, value_name = "N")]
    pub parallel_eval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding train.jsonl, valid.jsonl and optionally test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Variants trained concurrently. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A JSONL file, or a data directory (its train.jsonl is used).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corrupts one autodiff gradient before comparison.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command.
pub fn execute(cli: Cli) -> Result<RunManifest, CliError> {
    match cli.command {
        Command::GenData(a) => commands::cmd_gen_data(&a),
        Command::Train(a) => commands::cmd_train(&a),
        Command::Ablate(a) => commands::cmd_ablate(&a),
        Command::Analyze(a) => commands::cmd_analyze(&a),
        Command::GradCheck(a) => commands::cmd_grad_check(&a),
        Command::Replay(a) => replay(&RunManifest::load(&a.manifest)?, &a.out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(manifest) => {
            if manifest.outcome != Outcome::Ok {
                eprintln!("error: {}", describe(manifest.outcome));
            }
            manifest.outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn describe(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Ok => "ok",
        Outcome::GradCheckFailed => "gradient check failed",
    }
}

#[cfg(test)]
mod tests;
