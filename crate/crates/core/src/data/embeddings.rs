use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::DataError;
use crate::tensor::Tensor;

/// Plain-text word vectors, one `word v1 v2 ... vE` per line.
///
/// Unknown words resolve to the zero vector and bump [`oov_count`](Self::oov_count).
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov: AtomicUsize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            oov: AtomicUsize::new(0),
        }
    }

    /// Duplicate words keep the last vector and log a warning.
    pub fn parse<R: BufRead>(reader: R, dim: usize) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Embedding {
                line: 0,
                message: "dimension must be positive".into(),
            });
        }
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| DataError::Embedding {
                line: line_no,
                message: e.to_string(),
            })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|message| DataError::Embedding { line: line_no, message })?;
            if values.len() != dim {
                return Err(DataError::Embedding {
                    line: line_no,
                    message: format!("`{word}` has {} values, expected {dim}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Embedding {
                    line: line_no,
                    message: format!("`{word}` has a non-finite value"),
                });
            }
            if table.vectors.insert(word.to_string(), values).is_some() {
                log::warn!("embedding table line {line_no}: duplicate word `{word}`, keeping the later vector");
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(BufReader::new(file), dim)
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<(), DataError> {
        if vector.len() != self.dim {
            return Err(DataError::Embedding {
                line: 0,
                message: format!("vector has {} values, expected {}", vector.len(), self.dim),
            });
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Returns the vector and whether the word was known.
    pub fn resolve(&self, word: &str) -> (Tensor, bool) {
        match self.vectors.get(word) {
            Some(v) => (Tensor::vector(v.clone()), true),
            None => {
                self.oov.fetch_add(1, Ordering::Relaxed);
                (Tensor::zeros(&[self.dim]), false)
            }
        }
    }

    pub fn lookup(&self, word: &str) -> Tensor {
        self.resolve(word).0
    }

    pub fn oov_count(&self) -> usize {
        self.oov.load(Ordering::Relaxed)
    }
}
