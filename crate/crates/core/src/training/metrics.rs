use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::model::Task;
use crate::tensor::sigmoid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{predictions} predictions for {labels} labels")]
    Length { predictions: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("sample {index}: expected {expected} outputs, found {found}")]
    Width { index: usize, expected: usize, found: usize },
    #[error("sample {index}: label does not match the {task:?} task")]
    Task { index: usize, task: Task },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsOptions {
    /// Whether a regression prediction of exactly 0 counts as positive for
    /// Acc-2 (otherwise it counts as negative).
    pub zero_prediction_positive: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            zero_prediction_positive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub acc2: f64,
    /// `None` when the class has no positive labels and no positive
    /// predictions.
    pub f1: Option<f64>,
}

/// Evaluation summary. Regression fills `pearson`, `acc2` and `acc7`;
/// multilabel fills `classes` and reports the mean per-class accuracy as
/// `acc2`. `mae` is over raw outputs (regression) or sigmoid probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub mae: f64,
    /// `None` with fewer than 2 samples or zero variance on either side.
    pub pearson: Option<f64>,
    /// `None` when no sample has a nonzero label.
    pub acc2: Option<f64>,
    pub acc2_count: usize,
    pub acc7: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ClassMetrics>,
}

pub fn mae(preds: &[f64], labels: &[f64]) -> f64 {
    preds.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / preds.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Seven-way class: nearest integer, clamped to [-3, 3].
pub fn acc7_class(v: f64) -> i32 {
    v.round().clamp(-3.0, 3.0) as i32
}

fn regression_report(preds: &[f64], labels: &[f64], opts: &MetricsOptions) -> MetricsReport {
    let mut hits = 0;
    let mut counted = 0;
    for (&p, &y) in preds.iter().zip(labels) {
        if y == 0.0 {
            continue;
        }
        counted += 1;
        let pred_pos = p > 0.0 || (p == 0.0 && opts.zero_prediction_positive);
        if pred_pos == (y > 0.0) {
            hits += 1;
        }
    }
    let acc7_hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, y)| acc7_class(**p) == acc7_class(**y))
        .count();
    MetricsReport {
        count: preds.len(),
        mae: mae(preds, labels),
        pearson: pearson(preds, labels),
        acc2: (counted > 0).then(|| hits as f64 / counted as f64),
        acc2_count: counted,
        acc7: Some(acc7_hits as f64 / preds.len() as f64),
        classes: Vec::new(),
    }
}

fn multilabel_report(logits: &[Vec<f64>], targets: &[Vec<f64>]) -> MetricsReport {
    let k = targets[0].len();
    let n = targets.len();
    let mut abs_err = 0.0;
    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let (mut tp, mut fp, mut fn_, mut hits) = (0usize, 0usize, 0usize, 0usize);
        for (z, y) in logits.iter().zip(targets) {
            let p = sigmoid(z[c]);
            abs_err += (p - y[c]).abs();
            let pred = p >= 0.5;
            let truth = y[c] > 0.5;
            match (pred, truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
            if pred == truth {
                hits += 1;
            }
        }
        let denom = 2 * tp + fp + fn_;
        classes.push(ClassMetrics {
            acc2: hits as f64 / n as f64,
            f1: (denom > 0).then(|| 2.0 * tp as f64 / denom as f64),
        });
    }
    MetricsReport {
        count: n,
        mae: abs_err / (n * k) as f64,
        pearson: None,
        acc2: Some(classes.iter().map(|c| c.acc2).sum::<f64>() / k as f64),
        acc2_count: n,
        acc7: None,
        classes,
    }
}

/// `preds[i]` is the model output for sample `i`: one value for regression,
/// one logit per class for multilabel.
pub fn compute_metrics(
    preds: &[Vec<f64>],
    labels: &[Label],
    task: Task,
    opts: &MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::Length {
            predictions: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let width = task.outputs();
    for (index, (p, y)) in preds.iter().zip(labels).enumerate() {
        if p.len() != width {
            return Err(MetricsError::Width {
                index,
                expected: width,
                found: p.len(),
            });
        }
        let ok = match (task, y) {
            (Task::Regression, Label::Regression(_)) => true,
            (Task::Multilabel(k), Label::Multilabel(bits)) => bits.len() == k,
            _ => false,
        };
        if !ok {
            return Err(MetricsError::Task { index, task });
        }
    }
    Ok(match task {
        Task::Regression => {
            let p: Vec<f64> = preds.iter().map(|p| p[0]).collect();
            let y: Vec<f64> = labels.iter().map(|l| l.targets()[0]).collect();
            regression_report(&p, &y, opts)
        }
        Task::Multilabel(_) => {
            let y: Vec<Vec<f64>> = labels.iter().map(Label::targets).collect();
            multilabel_report(preds, &y)
        }
    })
}

/// Regression metrics from flat slices.
pub fn regression_metrics(preds: &[f64], labels: &[f64]) -> Result<MetricsReport, MetricsError> {
    let p: Vec<Vec<f64>> = preds.iter().map(|&v| vec![v]).collect();
    let y: Vec<Label> = labels.iter().map(|&v| Label::Regression(v)).collect();
    compute_metrics(&p, &y, Task::Regression, &MetricsOptions::default())
}
