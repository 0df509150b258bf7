//! Losses, Adam, evaluation metrics and the train/evaluate loops.

mod metrics;
mod optim;

pub use metrics::{
    acc7_class, compute_metrics, mae, pearson, regression_metrics, ClassMetrics, MetricsError, MetricsOptions,
    MetricsReport,
};
pub use optim::{adam_step, AdamConfig, AdamState, StepOutcome};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AlignedUtterance, Label};
use crate::model::{ModelError, RavenModel, Task};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("train.{field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("label of `{utterance}` does not fit the {task:?} task")]
    Task { utterance: String, task: Task },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Utterances whose gradients are summed into one optimizer step.
    pub batch_size: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// Shuffling seed.
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Worker threads for validation passes. Results do not depend on it.
    pub eval_threads: usize,
    pub metrics: MetricsOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            patience: 10,
            seed: 0,
            clip_norm: Some(5.0),
            eval_threads: 1,
            metrics: MetricsOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |field, message: &str| {
            Err(TrainError::Config {
                field,
                message: message.to_string(),
            })
        };
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err("learning_rate", "must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return err("beta1", "must lie in (0, 1)");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return err("beta2", "must lie in (0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return err("epsilon", "must be positive");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1");
        }
        if self.eval_threads == 0 {
            return err("eval_threads", "must be at least 1");
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return err("clip_norm", "must be positive");
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
        }
    }
}

/// L1 for regression, mean binary cross-entropy on logits for multilabel.
pub fn loss(tape: &mut Tape, prediction: Var, label: &Label, task: Task) -> Result<Var, TrainError> {
    match (task, label) {
        (Task::Regression, Label::Regression(y)) => {
            let target = tape.constant(Tensor::vector(vec![*y]));
            let diff = tape.sub(prediction, target)?;
            let abs = tape.abs(diff)?;
            Ok(tape.sum(abs)?)
        }
        (Task::Multilabel(k), Label::Multilabel(bits)) if bits.len() == k => {
            Ok(tape.bce_with_logits(prediction, &label.targets())?)
        }
        _ => Err(TrainError::Task {
            utterance: String::new(),
            task,
        }),
    }
}

/// Outputs, per-utterance losses and metrics for one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub outputs: Vec<Vec<f64>>,
    #[serde(skip)]
    pub losses: Vec<f64>,
}

fn forward_loss(model: &RavenModel, utt: &AlignedUtterance) -> Result<(Vec<f64>, f64), TrainError> {
    let mut tape = Tape::new();
    let params = model.params().bind(&mut tape, false);
    let out = model.forward(&mut tape, &params, utt)?;
    let l = loss(&mut tape, out.prediction, &utt.label, model.config().task).map_err(|e| tag(e, utt))?;
    Ok((tape.value(out.prediction).data().to_vec(), tape.value(l).item()))
}

fn tag(e: TrainError, utt: &AlignedUtterance) -> TrainError {
    match e {
        TrainError::Task { task, .. } => TrainError::Task {
            utterance: utt.id.clone(),
            task,
        },
        other => other,
    }
}

/// Forward-only pass over `split`. With `threads > 1` utterances are split
/// into contiguous chunks and merged back in order, so the result is
/// identical to the single-threaded one.
pub fn evaluate(
    model: &RavenModel,
    split: &[AlignedUtterance],
    threads: usize,
    opts: &MetricsOptions,
) -> Result<Evaluation, TrainError> {
    if split.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let threads = threads.clamp(1, split.len());
    let results: Vec<(Vec<f64>, f64)> = if threads == 1 {
        split.iter().map(|u| forward_loss(model, u)).collect::<Result<_, _>>()?
    } else {
        let chunk = split.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = split
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || part.iter().map(|u| forward_loss(model, u)).collect::<Result<Vec<_>, _>>())
                })
                .collect();
            let mut all = Vec::with_capacity(split.len());
            for h in handles {
                all.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, TrainError>(all)
        })?
    };
    let (outputs, losses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let labels: Vec<Label> = split.iter().map(|u| u.label.clone()).collect();
    let metrics = compute_metrics(&outputs, &labels, model.config().task, opts)?;
    Ok(Evaluation {
        loss: losses.iter().sum::<f64>() / losses.len() as f64,
        metrics,
        outputs,
        losses,
    })
}

/// One line of the per-epoch log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub metrics: MetricsReport,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss (the
    /// initial parameters when no epoch ran).
    pub model: RavenModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_valid_loss: Option<f64>,
    pub epochs_run: usize,
    pub skipped_steps: u64,
}

impl TrainOutcome {
    pub fn log_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.log {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        s
    }
}

/// Backpropagates one utterance and adds its gradient into the model's
/// gradient buffers. Returns the output and the loss.
pub fn accumulate_utterance(model: &mut RavenModel, utt: &AlignedUtterance) -> Result<(Vec<f64>, f64), TrainError> {
    let mut tape = Tape::new();
    let params = model.params().bind(&mut tape, true);
    let out = model.forward(&mut tape, &params, utt)?;
    let l = loss(&mut tape, out.prediction, &utt.label, model.config().task).map_err(|e| tag(e, utt))?;
    tape.backward(l)?;
    model.params_mut().accumulate_grads(&tape, &params);
    Ok((tape.value(out.prediction).data().to_vec(), tape.value(l).item()))
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// Each epoch visits `train` in an order drawn from a generator seeded by
/// `cfg.seed`; batch gradients are averaged over the batch. Training is a
/// single sequential stream, so equal inputs give bitwise-equal outputs.
pub fn train(
    mut model: RavenModel,
    train: &[AlignedUtterance],
    valid: &[AlignedUtterance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    for u in train.iter().chain(valid) {
        model.check_utterance(u)?;
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            log: Vec::new(),
            best_epoch: None,
            best_valid_loss: None,
            epochs_run: 0,
            skipped_steps: 0,
        });
    }
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit("valid"));
    }

    let task = model.config().task;
    let adam = cfg.adam();
    let mut state = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, RavenModel)> = None;
    let mut epochs_run = 0;
    model.params_mut().zero_grads();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut outputs = vec![Vec::new(); train.len()];
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let (out, l) = accumulate_utterance(&mut model, &train[i])?;
                outputs[i] = out;
                total += l;
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f64);
            adam_step(model.params_mut(), &mut state, &adam);
        }
        let labels: Vec<Label> = train.iter().map(|u| u.label.clone()).collect();
        log.push(EpochRecord {
            epoch,
            split: "train",
            loss: total / train.len() as f64,
            metrics: compute_metrics(&outputs, &labels, task, &cfg.metrics)?,
        });

        let eval = evaluate(&model, valid, cfg.eval_threads, &cfg.metrics)?;
        log::info!(
            "epoch {epoch}: train loss {:.4}, valid loss {:.4}, valid acc2 {:?}",
            total / train.len() as f64,
            eval.loss,
            eval.metrics.acc2
        );
        log.push(EpochRecord {
            epoch,
            split: "valid",
            loss: eval.loss,
            metrics: eval.metrics,
        });
        epochs_run = epoch;
        let improved = best.as_ref().is_none_or(|(_, l, _)| eval.loss < *l);
        if improved {
            best = Some((epoch, eval.loss, model.clone()));
        } else if epoch - best.as_ref().map_or(0, |(e, _, _)| *e) >= cfg.patience {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (best_epoch, best_loss, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch: Some(best_epoch),
        best_valid_loss: Some(best_loss),
        epochs_run,
        skipped_steps: state.anomalies(),
    })
}
