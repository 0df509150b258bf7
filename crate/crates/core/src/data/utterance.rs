use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Utterance-level target: a sentiment intensity, or one 0/1 flag per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Regression(f64),
    Multilabel(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Label {
    pub fn targets(&self) -> Vec<f64> {
        match self {
            Label::Regression(v) => vec![*v],
            Label::Multilabel(bits) => bits.iter().map(|&b| f64::from(b)).collect(),
        }
    }

    /// Sign of a regression label; zero and multilabel targets have none.
    pub fn polarity(&self) -> Option<Polarity> {
        match self {
            Label::Regression(v) if *v > 0.0 => Some(Polarity::Positive),
            Label::Regression(v) if *v < 0.0 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// One utterance with its words and the visual/acoustic frames that fall
/// within each word's time span.
///
/// `words`, `embeddings`, `visual` and `acoustic` have the same length; span
/// `i` of `visual` is a `T_v × visual_dim` matrix for word `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUtterance {
    pub id: String,
    pub words: Vec<String>,
    pub embeddings: Vec<Tensor>,
    pub visual: Vec<Tensor>,
    pub acoustic: Vec<Tensor>,
    pub label: Label,
}

impl AlignedUtterance {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.first().map(Tensor::len)
    }

    pub fn visual_dim(&self) -> Option<usize> {
        self.visual.first().map(Tensor::cols)
    }

    pub fn acoustic_dim(&self) -> Option<usize> {
        self.acoustic.first().map(Tensor::cols)
    }
}
