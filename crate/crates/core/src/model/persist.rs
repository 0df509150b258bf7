use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, RavenModel};
use crate::fsutil::write_atomic;
use crate::nn::{read_checkpoint, write_checkpoint, CheckpointError};

const FORMAT: &str = "raven-model/1";

/// Metadata document stored in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: ModelConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelLoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl RavenModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            format: FORMAT.to_string(),
            model: self.config.clone(),
        };
        let meta = serde_json::to_string(&meta).expect("config serializes");
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &self.store, &meta).expect("writing to memory");
        bytes
    }

    /// Rebuilds a model from checkpoint bytes. The stored config decides the
    /// parameter layout; every tensor must match it by name and shape.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self, ModelLoadError> {
        let ck = read_checkpoint(bytes)?;
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta).map_err(|e| ModelLoadError::Meta(e.to_string()))?;
        if meta.format != FORMAT {
            return Err(ModelLoadError::Meta(format!("unsupported format `{}`", meta.format)));
        }
        let mut model = RavenModel::uninitialized(meta.model)?;
        ck.apply_to(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelLoadError> {
        write_atomic(path, &self.to_checkpoint_bytes()).map_err(|source| ModelLoadError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelLoadError> {
        let bytes = fs::read(path).map_err(|source| ModelLoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_checkpoint_bytes(&bytes)
    }
}
