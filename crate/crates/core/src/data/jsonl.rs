//! JSON-lines dataset format. One utterance per line:
//!
//! ```json
//! {"id":"u1","words":["so","good"],"embeddings":[[..E..],[..E..]],
//!  "visual":[[[..dim_v..],...],...],"acoustic":[[[..dim_a..],...],...],"label":1.5}
//! ```
//!
//! `embeddings` may be omitted when an [`EmbeddingTable`] is supplied.
//! `label` is a number (regression) or an array of 0/1 flags (multilabel).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AlignedUtterance, DataError, EmbeddingTable, Label};
use crate::fsutil::write_atomic;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawUtterance {
    pub id: String,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f64>>>,
    pub visual: Vec<Vec<Vec<f64>>>,
    pub acoustic: Vec<Vec<Vec<f64>>>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions<'a> {
    /// Resolves words when a line carries no `embeddings`.
    pub embeddings: Option<&'a EmbeddingTable>,
    /// Frame width used to impute a zero frame when a whole utterance has no
    /// visual frames; otherwise the width is taken from the data.
    pub visual_dim: Option<usize>,
    pub acoustic_dim: Option<usize>,
}

/// Counters for repairs applied while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImputeStats {
    pub visual_spans: usize,
    pub acoustic_spans: usize,
    pub oov_words: usize,
}

fn invalid(id: &str, field: impl Into<String>, message: impl Into<String>) -> DataError {
    DataError::Invalid {
        id: id.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

fn spans_to_tensors(
    id: &str,
    modality: &str,
    spans: Vec<Vec<Vec<f64>>>,
    declared_dim: Option<usize>,
    imputed: &mut usize,
) -> Result<Vec<Tensor>, DataError> {
    let observed = spans.iter().flatten().next().map(Vec::len);
    let dim = match (declared_dim, observed) {
        (Some(d), _) => d,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(invalid(
                id,
                modality,
                "no frames in any span and no declared feature dimension to impute with",
            ))
        }
    };
    if dim == 0 {
        return Err(invalid(id, modality, "frames must have at least one feature"));
    }
    let mut out = Vec::with_capacity(spans.len());
    for (i, span) in spans.into_iter().enumerate() {
        if span.is_empty() {
            *imputed += 1;
            out.push(Tensor::zeros(&[1, dim]));
            continue;
        }
        for (t, frame) in span.iter().enumerate() {
            if frame.len() != dim {
                return Err(invalid(
                    id,
                    format!("{modality}[{i}][{t}]"),
                    format!("frame has {} features, expected {dim}", frame.len()),
                ));
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(invalid(id, format!("{modality}[{i}][{t}]"), "non-finite value"));
            }
        }
        let t = Tensor::from_rows(&span).map_err(|e| invalid(id, format!("{modality}[{i}]"), e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}

/// Enforces the utterance invariants and repairs what has a declared repair:
/// an empty visual or acoustic span becomes a single all-zero frame.
pub fn validate_and_impute(
    raw: RawUtterance,
    opts: &LoadOptions<'_>,
    stats: &mut ImputeStats,
) -> Result<AlignedUtterance, DataError> {
    let id = raw.id;
    let n = raw.words.len();
    if n == 0 {
        return Err(invalid(&id, "words", "must contain at least one word"));
    }
    for (field, len) in [("visual", raw.visual.len()), ("acoustic", raw.acoustic.len())] {
        if len != n {
            return Err(invalid(&id, field, format!("{len} spans for {n} words")));
        }
    }

    let embeddings = match (raw.embeddings, opts.embeddings) {
        (Some(rows), _) => {
            if rows.len() != n {
                return Err(invalid(&id, "embeddings", format!("{} vectors for {n} words", rows.len())));
            }
            let dim = rows[0].len();
            let mut out = Vec::with_capacity(n);
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != dim || dim == 0 {
                    return Err(invalid(
                        &id,
                        format!("embeddings[{i}]"),
                        format!("has {} values, expected {dim}", row.len()),
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(&id, format!("embeddings[{i}]"), "non-finite value"));
                }
                out.push(Tensor::vector(row));
            }
            out
        }
        (None, Some(table)) => raw
            .words
            .iter()
            .map(|w| {
                let (v, hit) = table.resolve(w);
                if !hit {
                    stats.oov_words += 1;
                }
                v
            })
            .collect(),
        (None, None) => {
            return Err(invalid(&id, "embeddings", "missing and no embedding table supplied"));
        }
    };

    let visual = spans_to_tensors(&id, "visual", raw.visual, opts.visual_dim, &mut stats.visual_spans)?;
    let acoustic = spans_to_tensors(&id, "acoustic", raw.acoustic, opts.acoustic_dim, &mut stats.acoustic_spans)?;

    match &raw.label {
        Label::Regression(v) if !v.is_finite() => return Err(invalid(&id, "label", "non-finite value")),
        Label::Multilabel(bits) if bits.is_empty() => return Err(invalid(&id, "label", "empty class vector")),
        Label::Multilabel(bits) if bits.iter().any(|b| *b > 1) => {
            return Err(invalid(&id, "label", "class flags must be 0 or 1"))
        }
        _ => {}
    }

    Ok(AlignedUtterance {
        id,
        words: raw.words,
        embeddings,
        visual,
        acoustic,
        label: raw.label,
    })
}

/// Parses a JSON-lines stream. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    opts: &LoadOptions<'_>,
) -> Result<(Vec<AlignedUtterance>, ImputeStats), DataError> {
    let mut stats = ImputeStats::default();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::Schema {
            line: lineno,
            field: String::new(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let raw: RawUtterance = serde_path_to_error::deserialize(de).map_err(|e| DataError::Schema {
            line: lineno,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        out.push(validate_and_impute(raw, opts, &mut stats).map_err(|e| e.at_line(lineno))?);
    }
    if stats.visual_spans + stats.acoustic_spans > 0 {
        log::warn!(
            "imputed zero frames for {} empty visual and {} empty acoustic spans",
            stats.visual_spans,
            stats.acoustic_spans
        );
    }
    if stats.oov_words > 0 {
        log::info!("{} out-of-vocabulary words mapped to the zero vector", stats.oov_words);
    }
    Ok((out, stats))
}

pub fn load_dataset_with(
    path: &Path,
    opts: &LoadOptions<'_>,
) -> Result<(Vec<AlignedUtterance>, ImputeStats), DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(BufReader::new(file), opts)
}

pub fn load_dataset(path: &Path, opts: &LoadOptions<'_>) -> Result<Vec<AlignedUtterance>, DataError> {
    load_dataset_with(path, opts).map(|(u, _)| u)
}

impl From<&AlignedUtterance> for RawUtterance {
    fn from(u: &AlignedUtterance) -> Self {
        let spans = |s: &[Tensor]| {
            s.iter()
                .map(|t| (0..t.rows()).map(|r| t.row(r).to_vec()).collect())
                .collect()
        };
        RawUtterance {
            id: u.id.clone(),
            words: u.words.clone(),
            embeddings: Some(u.embeddings.iter().map(|e| e.data().to_vec()).collect()),
            visual: spans(&u.visual),
            acoustic: spans(&u.acoustic),
            label: u.label.clone(),
        }
    }
}

/// Canonical single-line encoding (no trailing newline). Floats use the
/// shortest representation that parses back to the same bits.
pub fn to_jsonl_line(u: &AlignedUtterance) -> String {
    serde_json::to_string(&RawUtterance::from(u)).expect("utterance serializes")
}

pub fn write_dataset(path: &Path, utterances: &[AlignedUtterance]) -> Result<(), DataError> {
    let mut buf = String::new();
    for u in utterances {
        buf.push_str(&to_jsonl_line(u));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
