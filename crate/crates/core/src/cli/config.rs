use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::analysis::PatternRule;
use crate::model::{Ablation, ModelConfig, Task};
use crate::training::TrainConfig;

/// Reads a TOML document; unknown keys are errors.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// `[model]` table. Dimensions left out are taken from the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embedding_dim: Option<usize>,
    pub visual_dim: Option<usize>,
    pub acoustic_dim: Option<usize>,
    pub visual_hidden: Option<usize>,
    pub acoustic_hidden: Option<usize>,
    pub utterance_hidden: Option<usize>,
    pub beta: Option<f64>,
    pub ablation: Option<Ablation>,
    pub task: Option<Task>,
    pub seed: Option<u64>,
}

impl ModelSection {
    pub fn resolve(&self, embedding_dim: usize, visual_dim: usize, acoustic_dim: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(
            self.embedding_dim.unwrap_or(embedding_dim),
            self.visual_dim.unwrap_or(visual_dim),
            self.acoustic_dim.unwrap_or(acoustic_dim),
        );
        if let Some(v) = self.visual_hidden {
            cfg.visual_hidden = v;
        }
        if let Some(v) = self.acoustic_hidden {
            cfg.acoustic_hidden = v;
        }
        if let Some(v) = self.utterance_hidden {
            cfg.utterance_hidden = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.ablation {
            cfg.ablation = v;
        }
        if let Some(v) = self.task {
            cfg.task = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Whitespace-separated text embeddings for lines without inline vectors.
    pub embeddings: Option<PathBuf>,
}

/// The config file of `train` and `ablate`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
}

/// The config file of `analyze`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub analysis: PatternRule,
    pub data: DataSection,
}

/// The toy instance built by `grad-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub words: usize,
    pub frames: usize,
    pub embedding_dim: usize,
    pub visual_dim: usize,
    pub acoustic_dim: usize,
    pub visual_hidden: usize,
    pub acoustic_hidden: usize,
    pub utterance_hidden: usize,
    pub beta: f64,
    pub label: f64,
    pub ablations: Vec<Ablation>,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            words: 2,
            frames: 3,
            embedding_dim: 4,
            visual_dim: 3,
            acoustic_dim: 3,
            visual_hidden: 3,
            acoustic_hidden: 3,
            utterance_hidden: 4,
            beta: 0.5,
            // Far from any initial prediction, so the L1 kink is never crossed.
            label: 3.0,
            ablations: Ablation::ALL.to_vec(),
            seed: 0,
            step: 1e-3,
            tolerance: 1e-4,
        }
    }
}

impl GradCheckConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Invalid(format!("grad_check.{field}: {msg}")));
        if self.words == 0 {
            return bad("words", "must be at least 1");
        }
        if self.frames == 0 {
            return bad("frames", "must be at least 1");
        }
        if self.ablations.is_empty() {
            return bad("ablations", "must name at least one variant");
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step", "must be positive");
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return bad("tolerance", "must be positive");
        }
        if !self.label.is_finite() {
            return bad("label", "must be finite");
        }
        Ok(())
    }

    pub fn model_config(&self, ablation: Ablation) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.embedding_dim,
            visual_dim: self.visual_dim,
            acoustic_dim: self.acoustic_dim,
            visual_hidden: self.visual_hidden,
            acoustic_hidden: self.acoustic_hidden,
            utterance_hidden: self.utterance_hidden,
            beta: self.beta,
            ablation,
            task: Task::Regression,
            seed: self.seed,
        }
    }
}
