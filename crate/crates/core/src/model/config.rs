use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which components of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Subword LSTMs, gated mixing and shifting.
    #[default]
    Full,
    /// Frame averages plus an affine map replace the subword LSTMs.
    NoSub,
    /// Nonverbal embeddings are concatenated to the word embedding.
    NoShift,
    /// Frame averages concatenated to the word embedding (early fusion).
    NoSubShift,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoSub, Ablation::NoShift, Ablation::NoSubShift];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSub => "no_sub",
            Ablation::NoShift => "no_shift",
            Ablation::NoSubShift => "no_sub_shift",
        }
    }

    /// Whether forward passes produce shift records.
    pub fn shifts(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSub)
    }

    pub fn subword_lstms(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoShift)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation `{s}` (expected full, no_sub, no_shift or no_sub_shift)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Scalar sentiment intensity.
    #[default]
    Regression,
    /// Independent binary labels, one logit per class.
    Multilabel(usize),
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Multilabel(k) => k,
        }
    }
}

fn default_embedding_dim() -> usize {
    300
}
fn default_subnet_hidden() -> usize {
    16
}
fn default_utterance_hidden() -> usize {
    64
}
fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    pub visual_dim: usize,
    pub acoustic_dim: usize,
    #[serde(default = "default_subnet_hidden")]
    pub visual_hidden: usize,
    #[serde(default = "default_subnet_hidden")]
    pub acoustic_hidden: usize,
    #[serde(default = "default_utterance_hidden")]
    pub utterance_hidden: usize,
    /// Shift threshold: `‖α·h_m‖ ≤ beta·‖e‖`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub task: Task,
    /// Parameter initialization seed.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("model.{field}: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ModelConfig {
    pub fn new(embedding_dim: usize, visual_dim: usize, acoustic_dim: usize) -> Self {
        Self {
            embedding_dim,
            visual_dim,
            acoustic_dim,
            visual_hidden: default_subnet_hidden(),
            acoustic_hidden: default_subnet_hidden(),
            utterance_hidden: default_utterance_hidden(),
            beta: default_beta(),
            ablation: Ablation::Full,
            task: Task::Regression,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dims = [
            ("embedding_dim", self.embedding_dim),
            ("visual_dim", self.visual_dim),
            ("acoustic_dim", self.acoustic_dim),
            ("visual_hidden", self.visual_hidden),
            ("acoustic_hidden", self.acoustic_hidden),
            ("utterance_hidden", self.utterance_hidden),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(ConfigError {
                    field,
                    message: "must be at least 1".into(),
                });
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ConfigError {
                field: "beta",
                message: format!("must be finite and >= 0, got {}", self.beta),
            });
        }
        if self.task.outputs() == 0 {
            return Err(ConfigError {
                field: "task",
                message: "multilabel needs at least one class".into(),
            });
        }
        Ok(())
    }
}
