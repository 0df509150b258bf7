//! Shift analysis: collect shifted word embeddings, project them to 2-D with
//! a global PCA and tag each word by how its positive- and negative-context
//! centroids sit relative to its overall centroid.

mod pca;

pub use pca::{covariance, pca_fit, pca_project, Pca, PCA_MAX_ITERATIONS, PCA_TOLERANCE};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AlignedUtterance, Polarity};
use crate::fsutil::write_atomic;
use crate::model::{Ablation, ModelError, RavenModel, ShiftRecord};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("shift analysis needs a shifting model, got ablation `{0}`")]
    UnsupportedAblation(Ablation),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("PCA needs at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("points must all have dimension {expected}")]
    Dimension { expected: usize },
    #[error("PCA component {component} did not converge (residual {residual:e})")]
    NoConvergence { component: usize, residual: f64 },
    #[error("nothing to export")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Shift records of a dataset, grouped by word.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCorpus {
    pub records: Vec<ShiftRecord>,
    /// Record indices per word, in record order.
    pub groups: BTreeMap<String, Vec<usize>>,
}

impl ShiftCorpus {
    pub fn from_records(records: Vec<ShiftRecord>) -> Self {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            groups.entry(r.word.clone()).or_default().push(i);
        }
        Self { records, groups }
    }

    /// Polarity bucket of a record; `None` marks the excluded set.
    pub fn polarity(&self, index: usize) -> Option<Polarity> {
        self.records[index].label.polarity()
    }
}

/// One shift record per word occurrence, in dataset order.
pub fn extract_shifts(model: &RavenModel, dataset: &[AlignedUtterance]) -> Result<ShiftCorpus, AnalysisError> {
    let ablation = model.config().ablation;
    if !ablation.shifts() {
        return Err(AnalysisError::UnsupportedAblation(ablation));
    }
    let mut records = Vec::new();
    for u in dataset {
        records.extend(model.predict(u)?.shifts);
    }
    Ok(ShiftCorpus::from_records(records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftPattern {
    InherentPolarity,
    Polarizable,
    Neutral,
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRule {
    /// Offset threshold as a multiple of the pooled bucket spread.
    pub tau: f64,
    /// Minimum records in each polarity bucket.
    pub min_count: usize,
}

impl Default for PatternRule {
    fn default() -> Self {
        Self { tau: 0.5, min_count: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStats {
    pub count: usize,
    pub centroid: Option<[f64; 2]>,
    /// Row-major 2x2 sample covariance, eigenvalues clipped at 0.
    pub covariance: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordShiftSummary {
    pub word: String,
    pub count: usize,
    pub centroid: [f64; 2],
    pub positive: BucketStats,
    pub negative: BucketStats,
    pub excluded: usize,
    /// Distances from the overall centroid to the bucket centroids.
    pub offset_positive: Option<f64>,
    pub offset_negative: Option<f64>,
    /// Mean of the two buckets' standard deviations.
    pub spread: Option<f64>,
    pub pattern: ShiftPattern,
}

fn mean2(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// Sample covariance projected onto the PSD cone (eigenvalues below zero
/// are clipped, which only matters for round-off).
fn covariance2(points: &[[f64; 2]], mean: [f64; 2]) -> [f64; 4] {
    if points.len() < 2 {
        return [0.0; 4];
    }
    let denom = (points.len() - 1) as f64;
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p[0] - mean[0], p[1] - mean[1]);
        a += x * x;
        b += x * y;
        d += y * y;
    }
    let (a, b, d) = (a / denom, b / denom, d / denom);
    let half_tr = (a + d) / 2.0;
    let disc = (((a - d) / 2.0).powi(2) + b * b).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if l2 >= 0.0 {
        return [a, b, b, d];
    }
    // Rebuild from the clipped spectrum.
    let l1 = l1.max(0.0);
    let (vx, vy) = if b != 0.0 {
        (l1 - d, b)
    } else if a >= d {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let n = (vx * vx + vy * vy).sqrt();
    let (ux, uy) = (vx / n, vy / n);
    [l1 * ux * ux, l1 * ux * uy, l1 * ux * uy, l1 * uy * uy]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Tags one word from its projected points and their polarity buckets.
///
/// With `d_p`, `d_n` the distances from the overall centroid to the
/// positive and negative centroids and `s` the mean bucket standard
/// deviation: both `≤ τ·s` is neutral; exactly one above is inherent
/// polarity; both above with offsets pointing into opposite half-planes is
/// polarizable, and into the same half-plane is inherent polarity.
pub fn summarize_word(
    word: &str,
    points: &[[f64; 2]],
    polarities: &[Option<Polarity>],
    rule: &PatternRule,
) -> WordShiftSummary {
    let centroid = mean2(points);
    let bucket = |want: Polarity| -> Vec<[f64; 2]> {
        points
            .iter()
            .zip(polarities)
            .filter(|(_, p)| **p == Some(want))
            .map(|(x, _)| *x)
            .collect()
    };
    let pos = bucket(Polarity::Positive);
    let neg = bucket(Polarity::Negative);
    let stats = |b: &[[f64; 2]]| {
        if b.is_empty() {
            return BucketStats {
                count: 0,
                centroid: None,
                covariance: None,
            };
        }
        let c = mean2(b);
        BucketStats {
            count: b.len(),
            centroid: Some(c),
            covariance: Some(covariance2(b, c)),
        }
    };
    let positive = stats(&pos);
    let negative = stats(&neg);
    let excluded = points.len() - pos.len() - neg.len();

    let mut summary = WordShiftSummary {
        word: word.to_string(),
        count: points.len(),
        centroid,
        offset_positive: positive.centroid.map(|c| dist(c, centroid)),
        offset_negative: negative.centroid.map(|c| dist(c, centroid)),
        spread: None,
        positive,
        negative,
        excluded,
        pattern: ShiftPattern::InsufficientData,
    };
    if pos.len() < rule.min_count || neg.len() < rule.min_count {
        return summary;
    }
    let std = |c: Option<[f64; 4]>| c.map_or(0.0, |c| (c[0] + c[3]).max(0.0).sqrt());
    let s = (std(summary.positive.covariance) + std(summary.negative.covariance)) / 2.0;
    summary.spread = Some(s);
    let (cp, cn) = (summary.positive.centroid.unwrap(), summary.negative.centroid.unwrap());
    let (dp, dn) = (dist(cp, centroid), dist(cn, centroid));
    // Offsets within round-off of the centroid's own magnitude count as zero.
    let floor = 1e-12 * centroid[0].abs().max(centroid[1].abs()).max(s);
    let threshold = (rule.tau * s).max(floor);
    summary.pattern = match (dp > threshold, dn > threshold) {
        (false, false) => ShiftPattern::Neutral,
        (true, false) | (false, true) => ShiftPattern::InherentPolarity,
        (true, true) => {
            let dot = (cp[0] - centroid[0]) * (cn[0] - centroid[0]) + (cp[1] - centroid[1]) * (cn[1] - centroid[1]);
            if dot < 0.0 {
                ShiftPattern::Polarizable
            } else {
                ShiftPattern::InherentPolarity
            }
        }
    };
    summary
}

/// One row of the points export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub word: String,
    pub x: f64,
    pub y: f64,
    pub polarity: String,
    pub alpha: f64,
    pub utterance_id: String,
}

fn polarity_name(p: Option<Polarity>) -> &'static str {
    match p {
        Some(Polarity::Positive) => "positive",
        Some(Polarity::Negative) => "negative",
        None => "excluded",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftAnalysis {
    pub pca: Pca,
    pub rule: PatternRule,
    pub words: Vec<WordShiftSummary>,
    #[serde(skip)]
    pub points: Vec<PointRow>,
}

impl ShiftAnalysis {
    pub fn word(&self, word: &str) -> Option<&WordShiftSummary> {
        self.words.iter().find(|w| w.word == word)
    }
}

/// Global 2-D PCA over every shifted embedding, then per-word summaries.
pub fn analyze_corpus(corpus: &ShiftCorpus, rule: &PatternRule) -> Result<ShiftAnalysis, AnalysisError> {
    let shifted: Vec<Vec<f64>> = corpus.records.iter().map(|r| r.shifted.data().to_vec()).collect();
    let (proj, pca) = pca_project(&shifted, 2)?;
    let proj: Vec<[f64; 2]> = proj.into_iter().map(|p| [p[0], p[1]]).collect();
    let mut words = Vec::with_capacity(corpus.groups.len());
    for (word, idx) in &corpus.groups {
        let pts: Vec<[f64; 2]> = idx.iter().map(|&i| proj[i]).collect();
        let pols: Vec<Option<Polarity>> = idx.iter().map(|&i| corpus.polarity(i)).collect();
        words.push(summarize_word(word, &pts, &pols, rule));
    }
    let points = corpus
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| PointRow {
            word: r.word.clone(),
            x: proj[i][0],
            y: proj[i][1],
            polarity: polarity_name(corpus.polarity(i)).to_string(),
            alpha: r.alpha,
            utterance_id: r.utterance_id.clone(),
        })
        .collect();
    Ok(ShiftAnalysis {
        pca,
        rule: *rule,
        words,
        points,
    })
}

pub fn analyze(
    model: &RavenModel,
    dataset: &[AlignedUtterance],
    rule: &PatternRule,
) -> Result<ShiftAnalysis, AnalysisError> {
    analyze_corpus(&extract_shifts(model, dataset)?, rule)
}

pub const SUMMARY_FILE: &str = "shift_summary.json";
pub const POINTS_FILE: &str = "shift_points.csv";

pub fn points_csv(points: &[PointRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes the per-word summary JSON and the per-point CSV into `dir`.
pub fn export_analysis(analysis: &ShiftAnalysis, dir: &Path) -> Result<(PathBuf, PathBuf), AnalysisError> {
    if analysis.words.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let summary_path = dir.join(SUMMARY_FILE);
    let points_path = dir.join(POINTS_FILE);
    let mut json = serde_json::to_vec_pretty(analysis).expect("analysis serializes");
    json.push(b'\n');
    let csv = points_csv(&analysis.points).map_err(|source| AnalysisError::Csv {
        path: points_path.clone(),
        source,
    })?;
    for (path, bytes) in [(&summary_path, &json), (&points_path, &csv)] {
        write_atomic(path, bytes).map_err(|source| AnalysisError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok((summary_path, points_path))
}

#[cfg(test)]
mod tests;
