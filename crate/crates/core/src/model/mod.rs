//! The fusion model: per-word nonverbal sub-networks, the gated
//! modality-mixing network, norm-capped shifting of word embeddings, and the
//! utterance encoder with its task head. Ablated variants share the same
//! entry point and differ only in which components are registered.

mod config;
mod persist;

pub use config::{Ablation, ConfigError, ModelConfig, Task};
pub use persist::{CheckpointMeta, ModelLoadError};

use serde::Serialize;

use crate::data::{AlignedUtterance, Label};
use crate::nn::{
    affine, init_params, lstm_run, lstm_run_vars, AffineParams, InitScheme, LstmParams, NnError, ParamError, ParamId,
    ParamKind, ParamStore,
};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("utterance `{utterance}`: {what} has dimension {found}, model expects {expected}")]
    Dimension {
        utterance: String,
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("utterance `{0}` has no words")]
    EmptyUtterance(String),
    #[error("utterance `{utterance}`: word {position} has an empty {modality} span")]
    EmptySpan {
        utterance: String,
        position: usize,
        modality: &'static str,
    },
    #[error("utterance `{utterance}`: label does not fit task {task:?}")]
    LabelMismatch { utterance: String, task: Task },
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Nn(NnError::Tensor(e))
    }
}

impl From<ParamError> for ModelError {
    fn from(e: ParamError) -> Self {
        ModelError::Nn(NnError::Param(e))
    }
}

/// Visual and acoustic embeddings of one word.
#[derive(Debug, Clone, Copy)]
pub struct NonverbalEmbeddings {
    pub visual: Var,
    pub acoustic: Var,
}

/// Parameters of the gated modality-mixing network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixerParams {
    /// `1 × (d_v + E)` weight and scalar bias of the visual influence gate.
    pub gate_visual: AffineParams,
    pub gate_acoustic: AffineParams,
    /// `E × d_v`, no bias.
    pub proj_visual: AffineParams,
    pub proj_acoustic: AffineParams,
    pub shift_bias: ParamId,
}

impl MixerParams {
    fn register(store: &mut ParamStore, cfg: &ModelConfig) -> Result<Self, ParamError> {
        let e = cfg.embedding_dim;
        Ok(Self {
            gate_visual: AffineParams::register(store, "gate_visual", cfg.visual_hidden + e, 1, true)?,
            gate_acoustic: AffineParams::register(store, "gate_acoustic", cfg.acoustic_hidden + e, 1, true)?,
            proj_visual: AffineParams::register(store, "proj_visual", cfg.visual_hidden, e, false)?,
            proj_acoustic: AffineParams::register(store, "proj_acoustic", cfg.acoustic_hidden, e, false)?,
            shift_bias: store.register_kind("shift_bias", Tensor::zeros(&[e]), ParamKind::Bias)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subnets {
    Lstm { visual: LstmParams, acoustic: LstmParams },
    /// Temporal mean of the frames followed by an affine map to the hidden size.
    Mean { visual: AffineParams, acoustic: AffineParams },
}

/// Output of the mixing network for one word.
#[derive(Debug, Clone, Copy)]
pub struct MixOutput {
    pub shift: Var,
    pub gate_visual: Var,
    pub gate_acoustic: Var,
}

/// Numeric record of how one word occurrence was shifted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRecord {
    pub word: String,
    pub utterance_id: String,
    pub position: usize,
    pub label: Label,
    pub embedding: Tensor,
    pub shift: Tensor,
    pub alpha: f64,
    pub shifted: Tensor,
    pub gate_visual: f64,
    pub gate_acoustic: f64,
}

/// Result of [`RavenModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Final state of the utterance encoder.
    pub encoding: Var,
    /// Regression output (length 1) or per-class logits.
    pub prediction: Var,
    pub shifts: Vec<ShiftRecord>,
}

/// Plain-value forward result.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub output: Vec<f64>,
    pub encoding: Vec<f64>,
    pub shifts: Vec<ShiftRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RavenModel {
    config: ModelConfig,
    store: ParamStore,
    subnets: Option<Subnets>,
    mixer: Option<MixerParams>,
    encoder: LstmParams,
    head: AffineParams,
}

impl RavenModel {
    /// Builds and initializes a model (Glorot-uniform weights, forget bias 1)
    /// from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let mut model = Self::uninitialized(config)?;
        init_params(&mut model.store, &InitScheme::default(), model.config.seed);
        Ok(model)
    }

    /// Registers parameters without initializing them (all zeros).
    pub fn uninitialized(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let cfg = &config;
        let mut store = ParamStore::new();
        let subnets = match cfg.ablation {
            Ablation::Full | Ablation::NoShift => Some(Subnets::Lstm {
                visual: LstmParams::register(&mut store, "visual_lstm", cfg.visual_dim, cfg.visual_hidden)?,
                acoustic: LstmParams::register(&mut store, "acoustic_lstm", cfg.acoustic_dim, cfg.acoustic_hidden)?,
            }),
            Ablation::NoSub => Some(Subnets::Mean {
                visual: AffineParams::register(&mut store, "visual_mean", cfg.visual_dim, cfg.visual_hidden, true)?,
                acoustic: AffineParams::register(
                    &mut store,
                    "acoustic_mean",
                    cfg.acoustic_dim,
                    cfg.acoustic_hidden,
                    true,
                )?,
            }),
            Ablation::NoSubShift => None,
        };
        let mixer = if cfg.ablation.shifts() {
            Some(MixerParams::register(&mut store, cfg)?)
        } else {
            None
        };
        let encoder_input = match cfg.ablation {
            Ablation::Full | Ablation::NoSub => cfg.embedding_dim,
            Ablation::NoShift => cfg.embedding_dim + cfg.visual_hidden + cfg.acoustic_hidden,
            Ablation::NoSubShift => cfg.embedding_dim + cfg.visual_dim + cfg.acoustic_dim,
        };
        let encoder = LstmParams::register(&mut store, "utterance_lstm", encoder_input, cfg.utterance_hidden)?;
        let head = AffineParams::register(&mut store, "head", cfg.utterance_hidden, cfg.task.outputs(), true)?;
        Ok(Self {
            config,
            store,
            subnets,
            mixer,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn subnets(&self) -> Option<&Subnets> {
        self.subnets.as_ref()
    }

    pub fn mixer(&self) -> Option<&MixerParams> {
        self.mixer.as_ref()
    }

    pub fn encoder(&self) -> &LstmParams {
        &self.encoder
    }

    pub fn head(&self) -> &AffineParams {
        &self.head
    }

    /// Sets the shift threshold without touching parameters.
    pub fn set_beta(&mut self, beta: f64) -> Result<(), ModelError> {
        let mut cfg = self.config.clone();
        cfg.beta = beta;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Checks that an utterance fits this model's dimensions and task.
    pub fn check_utterance(&self, utt: &AlignedUtterance) -> Result<(), ModelError> {
        let cfg = &self.config;
        if utt.is_empty() {
            return Err(ModelError::EmptyUtterance(utt.id.clone()));
        }
        let dim_err = |what: String, expected: usize, found: usize| ModelError::Dimension {
            utterance: utt.id.clone(),
            what,
            expected,
            found,
        };
        for (i, e) in utt.embeddings.iter().enumerate() {
            if e.rank() != 1 || e.len() != cfg.embedding_dim {
                return Err(dim_err(format!("embedding {i}"), cfg.embedding_dim, e.len()));
            }
        }
        for (modality, spans, dim) in [
            ("visual", &utt.visual, cfg.visual_dim),
            ("acoustic", &utt.acoustic, cfg.acoustic_dim),
        ] {
            if spans.len() != utt.len() {
                return Err(dim_err(format!("{modality} span count"), utt.len(), spans.len()));
            }
            for (i, s) in spans.iter().enumerate() {
                if s.rank() != 2 || s.rows() == 0 {
                    return Err(ModelError::EmptySpan {
                        utterance: utt.id.clone(),
                        position: i,
                        modality,
                    });
                }
                if s.cols() != dim {
                    return Err(dim_err(format!("{modality} frames of word {i}"), dim, s.cols()));
                }
            }
        }
        if utt.embeddings.len() != utt.len() {
            return Err(dim_err("embedding count".into(), utt.len(), utt.embeddings.len()));
        }
        let label_ok = match (&utt.label, cfg.task) {
            (Label::Regression(_), Task::Regression) => true,
            (Label::Multilabel(b), Task::Multilabel(k)) => b.len() == k,
            _ => false,
        };
        if !label_ok {
            return Err(ModelError::LabelMismatch {
                utterance: utt.id.clone(),
                task: cfg.task,
            });
        }
        Ok(())
    }

    /// Full forward pass on `tape`, with parameters bound as `params`
    /// (see [`ParamStore::bind`]).
    pub fn forward(&self, tape: &mut Tape, params: &[Var], utt: &AlignedUtterance) -> Result<ForwardOutput, ModelError> {
        self.check_utterance(utt)?;
        let cfg = &self.config;
        let mut inputs = Vec::with_capacity(utt.len());
        let mut shifts = Vec::new();
        for i in 0..utt.len() {
            let e = tape.constant(utt.embeddings[i].clone());
            match (cfg.ablation, &self.subnets, &self.mixer) {
                (Ablation::Full | Ablation::NoSub, Some(subnets), Some(mixer)) => {
                    let emb = nonverbal_subnets(tape, subnets, params, &utt.visual[i], &utt.acoustic[i])?;
                    let mix = gated_mix(tape, mixer, params, e, emb)?;
                    let (shifted, alpha) = multimodal_shift(tape, e, mix.shift, cfg.beta)?;
                    shifts.push(ShiftRecord {
                        word: utt.words[i].clone(),
                        utterance_id: utt.id.clone(),
                        position: i,
                        label: utt.label.clone(),
                        embedding: utt.embeddings[i].clone(),
                        shift: tape.value(mix.shift).clone(),
                        alpha: tape.value(alpha).item(),
                        shifted: tape.value(shifted).clone(),
                        gate_visual: tape.value(mix.gate_visual).item(),
                        gate_acoustic: tape.value(mix.gate_acoustic).item(),
                    });
                    inputs.push(shifted);
                }
                (Ablation::NoShift, Some(subnets), None) => {
                    let emb = nonverbal_subnets(tape, subnets, params, &utt.visual[i], &utt.acoustic[i])?;
                    let x = tape.concat(e, emb.visual)?;
                    inputs.push(tape.concat(x, emb.acoustic)?);
                }
                (Ablation::NoSubShift, None, None) => {
                    let v = tape.constant(utt.visual[i].mean_rows());
                    let a = tape.constant(utt.acoustic[i].mean_rows());
                    let x = tape.concat(e, v)?;
                    inputs.push(tape.concat(x, a)?);
                }
                _ => unreachable!("component layout is fixed by the ablation at construction"),
            }
        }
        let (encoding, prediction) = encode_and_predict(tape, &self.encoder, &self.head, params, &inputs)?;
        Ok(ForwardOutput {
            encoding,
            prediction,
            shifts,
        })
    }

    /// Forward pass on a private tape without gradient bookkeeping.
    pub fn predict(&self, utt: &AlignedUtterance) -> Result<Prediction, ModelError> {
        let mut tape = Tape::new();
        let params = self.store.bind(&mut tape, false);
        let out = self.forward(&mut tape, &params, utt)?;
        Ok(Prediction {
            output: tape.value(out.prediction).data().to_vec(),
            encoding: tape.value(out.encoding).data().to_vec(),
            shifts: out.shifts,
        })
    }
}

/// Nonverbal embeddings for one word span: final LSTM states (or, for the
/// averaging variant, an affine map of the frame means).
pub fn nonverbal_subnets(
    tape: &mut Tape,
    subnets: &Subnets,
    params: &[Var],
    visual: &Tensor,
    acoustic: &Tensor,
) -> Result<NonverbalEmbeddings, ModelError> {
    match subnets {
        Subnets::Lstm { visual: lv, acoustic: la } => Ok(NonverbalEmbeddings {
            visual: lstm_run(tape, lv, params, visual)?,
            acoustic: lstm_run(tape, la, params, acoustic)?,
        }),
        Subnets::Mean { visual: av, acoustic: aa } => {
            if visual.rows() == 0 || acoustic.rows() == 0 {
                return Err(NnError::EmptySequence.into());
            }
            let mv = tape.constant(visual.mean_rows());
            let ma = tape.constant(acoustic.mean_rows());
            Ok(NonverbalEmbeddings {
                visual: affine(tape, av, params, mv)?,
                acoustic: affine(tape, aa, params, ma)?,
            })
        }
    }
}

/// Shift vector `h_m = w_v·(W_v h_v) + w_a·(W_a h_a) + b_h` with scalar
/// influence gates `w_v = σ(W_hv [h_v; e] + b_v)` and `w_a = σ(W_ha [h_a; e] + b_a)`.
pub fn gated_mix(
    tape: &mut Tape,
    mixer: &MixerParams,
    params: &[Var],
    word: Var,
    emb: NonverbalEmbeddings,
) -> Result<MixOutput, TensorError> {
    let gv_in = tape.concat(emb.visual, word)?;
    let gv = affine(tape, &mixer.gate_visual, params, gv_in)?;
    let gate_visual = tape.sigmoid(gv)?;
    let ga_in = tape.concat(emb.acoustic, word)?;
    let ga = affine(tape, &mixer.gate_acoustic, params, ga_in)?;
    let gate_acoustic = tape.sigmoid(ga)?;

    let pv = affine(tape, &mixer.proj_visual, params, emb.visual)?;
    let pa = affine(tape, &mixer.proj_acoustic, params, emb.acoustic)?;
    let sv = tape.scale_by(gate_visual, pv)?;
    let sa = tape.scale_by(gate_acoustic, pa)?;
    let mixed = tape.add(sv, sa)?;
    let shift = tape.add(mixed, params[mixer.shift_bias.index()])?;
    Ok(MixOutput {
        shift,
        gate_visual,
        gate_acoustic,
    })
}

/// `e_m = e + α·h_m` with `α = min(β·‖e‖/‖h_m‖, 1)`.
///
/// When `β = 0` or `‖h_m‖ = 0` the shift is disabled: `α = 0` and `e` itself
/// is returned as `e_m`.
pub fn multimodal_shift(tape: &mut Tape, word: Var, shift: Var, beta: f64) -> Result<(Var, Var), TensorError> {
    if tape.shape(word) != tape.shape(shift) {
        return Err(TensorError::Shape {
            op: "multimodal_shift",
            left: tape.shape(word).to_vec(),
            right: tape.shape(shift).to_vec(),
        });
    }
    let shift_norm = tape.l2_norm(shift)?;
    if beta == 0.0 || tape.value(shift_norm).item() == 0.0 {
        let alpha = tape.constant(Tensor::scalar(0.0));
        return Ok((word, alpha));
    }
    let word_norm = tape.l2_norm(word)?;
    let budget = tape.scale(word_norm, beta)?;
    let ratio = tape.div(budget, shift_norm)?;
    let alpha = tape.min_const(ratio, 1.0)?;
    let scaled = tape.scale_by(alpha, shift)?;
    let shifted = tape.add(word, scaled)?;
    Ok((shifted, alpha))
}

/// Plain-value form of [`multimodal_shift`]. Returns `(e_m, α)`.
pub fn shift_embedding(word: &[f64], shift: &[f64], beta: f64) -> Result<(Vec<f64>, f64), TensorError> {
    let mut tape = Tape::new();
    let e = tape.constant(Tensor::vector(word.to_vec()));
    let h = tape.constant(Tensor::vector(shift.to_vec()));
    let (em, alpha) = multimodal_shift(&mut tape, e, h, beta)?;
    Ok((tape.value(em).data().to_vec(), tape.value(alpha).item()))
}

/// Runs the utterance encoder over `inputs` and applies the task head to its
/// final state. Returns `(h, prediction)`.
pub fn encode_and_predict(
    tape: &mut Tape,
    encoder: &LstmParams,
    head: &AffineParams,
    params: &[Var],
    inputs: &[Var],
) -> Result<(Var, Var), ModelError> {
    let h = lstm_run_vars(tape, encoder, params, inputs)?;
    let prediction = affine(tape, head, params, h)?;
    Ok((h, prediction))
}
