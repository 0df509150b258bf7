//! Word-aligned multimodal data: the utterance model, the JSON-lines dataset
//! format, plain-text embedding tables and the planted-signal generator.

mod embeddings;
mod jsonl;
pub mod synthetic;
mod utterance;

pub use embeddings::EmbeddingTable;
pub use jsonl::{
    load_dataset, load_dataset_with, parse_dataset, to_jsonl_line, validate_and_impute, write_dataset, ImputeStats,
    LoadOptions, RawUtterance,
};
pub use synthetic::{generate_synthetic, SyntheticSpec, SyntheticSplits, WordClass};
pub use utterance::{AlignedUtterance, Label, Polarity};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("utterance `{id}`: `{field}`: {message}")]
    Invalid {
        id: String,
        field: String,
        message: String,
    },
    #[error("embedding table line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error("synthetic spec: `{field}`: {message}")]
    Spec { field: &'static str, message: String },
}

impl DataError {
    /// Attaches a line number to an utterance-level error.
    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            DataError::Invalid { field, message, .. } => DataError::Schema { line, field, message },
            other => other,
        }
    }
}
