//! Planted-signal corpus generator.
//!
//! Every utterance holds a few neutral filler words and (by default) one
//! signed word. The utterance label is the sum of per-word contributions:
//!
//! * a polarity word contributes its sign times a per-occurrence intensity
//!   (which also scales its sentiment-axis component), flipped when its
//!   visual frames carry the inversion burst (a fixed direction `u_inv`);
//! * a polarizable noun contributes the sign of the burst `±u_pol` planted
//!   in its acoustic frames;
//! * a neutral word contributes 0, even when it carries a distractor burst.
//!
//! A burst adds `snr · noise · u` to `pattern_frames` contiguous frames and
//! subtracts the matching amount from the remaining frames of the span, so
//! the span's temporal mean carries no trace of it.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AlignedUtterance, DataError, Label};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClass {
    Positive,
    Negative,
    Polarizable,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Acoustic,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    pub polarizable_nouns: Vec<String>,
    pub neutral_words: Vec<String>,
    pub embedding_dim: usize,
    pub visual_dim: usize,
    pub acoustic_dim: usize,
    /// Inclusive range of words per utterance.
    pub words_per_utterance: [usize; 2],
    /// Signed (polarity or polarizable) words per utterance.
    pub signed_words: usize,
    /// Probability that a signed word is a polarizable noun.
    pub noun_fraction: f64,
    pub visual_frames: [usize; 2],
    pub acoustic_frames: [usize; 2],
    pub pattern_frames: usize,
    /// Burst amplitude in units of the frame noise standard deviation.
    pub snr: f64,
    pub frame_noise: f64,
    pub inversion_prob: f64,
    pub distractor_prob: f64,
    pub label_noise: f64,
    pub signed_norm: f64,
    pub neutral_norm: f64,
    /// Share of a polarity word's embedding along the sentiment axis.
    pub sentiment_strength: f64,
    /// Log-scale standard deviation of a per-occurrence factor on a polarity
    /// word's sentiment-axis component (how strongly the word is meant).
    pub intensity_jitter: f64,
    /// Per-occurrence Gaussian noise on word embeddings; its expected norm
    /// is this fraction of the word's own norm.
    pub embedding_jitter: f64,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            positive_words: words(&["good", "great", "love", "happy"]),
            negative_words: words(&["bad", "awful", "hate", "boring"]),
            polarizable_nouns: words(&["movie", "plot", "acting", "ending"]),
            neutral_words: words(&[
                "the", "a", "it", "was", "and", "of", "to", "is", "this", "that", "with", "so",
            ]),
            embedding_dim: 12,
            visual_dim: 6,
            acoustic_dim: 8,
            words_per_utterance: [3, 6],
            signed_words: 1,
            noun_fraction: 0.5,
            visual_frames: [8, 12],
            acoustic_frames: [8, 12],
            pattern_frames: 2,
            snr: 4.0,
            frame_noise: 1.0,
            inversion_prob: 0.1,
            distractor_prob: 0.3,
            label_noise: 0.1,
            signed_norm: 1.0,
            neutral_norm: 0.3,
            sentiment_strength: 0.6,
            intensity_jitter: 0.8,
            embedding_jitter: 0.0,
            train_size: 2000,
            valid_size: 300,
            test_size: 500,
            seed: 7,
        }
    }
}

fn spec_err(field: &'static str, message: impl Into<String>) -> DataError {
    DataError::Spec {
        field,
        message: message.into(),
    }
}

impl SyntheticSpec {
    pub fn vocab_size(&self) -> usize {
        self.positive_words.len() + self.negative_words.len() + self.polarizable_nouns.len() + self.neutral_words.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(spec_err("snr", "must be positive and finite"));
        }
        for (field, v) in [
            ("frame_noise", self.frame_noise),
            ("label_noise", self.label_noise),
            ("signed_norm", self.signed_norm),
            ("neutral_norm", self.neutral_norm),
            ("embedding_jitter", self.embedding_jitter),
            ("intensity_jitter", self.intensity_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(spec_err(field, "must be finite and non-negative"));
            }
        }
        for (field, p) in [
            ("noun_fraction", self.noun_fraction),
            ("inversion_prob", self.inversion_prob),
            ("distractor_prob", self.distractor_prob),
            ("sentiment_strength", self.sentiment_strength),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(spec_err(field, "must lie in [0, 1]"));
            }
        }
        for (field, d) in [
            ("embedding_dim", self.embedding_dim),
            ("visual_dim", self.visual_dim),
            ("acoustic_dim", self.acoustic_dim),
            ("pattern_frames", self.pattern_frames),
            ("train_size", self.train_size),
        ] {
            if d == 0 {
                return Err(spec_err(field, "must be at least 1"));
            }
        }
        if self.embedding_dim < 2 {
            return Err(spec_err("embedding_dim", "must be at least 2"));
        }
        let [wmin, wmax] = self.words_per_utterance;
        if wmin == 0 || wmin > wmax {
            return Err(spec_err("words_per_utterance", "range must be nonempty and start at 1 or more"));
        }
        if self.signed_words > wmin {
            return Err(spec_err("signed_words", format!("exceeds the minimum utterance length {wmin}")));
        }
        if wmax > self.signed_words && self.neutral_words.is_empty() {
            return Err(spec_err("neutral_words", "needed to fill utterances"));
        }
        if self.signed_words > 0 {
            let polarity = !self.positive_words.is_empty() && !self.negative_words.is_empty();
            if self.noun_fraction < 1.0 && !polarity {
                return Err(spec_err("positive_words", "positive and negative lists must both be nonempty"));
            }
            if self.noun_fraction > 0.0 && self.polarizable_nouns.is_empty() {
                return Err(spec_err("polarizable_nouns", "must be nonempty when noun_fraction > 0"));
            }
        }
        for (field, [lo, hi]) in [("visual_frames", self.visual_frames), ("acoustic_frames", self.acoustic_frames)] {
            if lo > hi {
                return Err(spec_err(field, "range is empty"));
            }
            if lo <= self.pattern_frames {
                return Err(spec_err(
                    field,
                    format!("minimum {lo} must exceed pattern_frames {}", self.pattern_frames),
                ));
            }
        }
        let mut seen = HashSet::new();
        for w in self.all_words() {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(spec_err("neutral_words", format!("invalid word `{w}`")));
            }
            if !seen.insert(w) {
                return Err(spec_err("neutral_words", format!("word `{w}` appears in more than one place")));
            }
        }
        Ok(())
    }

    fn all_words(&self) -> impl Iterator<Item = &String> {
        self.positive_words
            .iter()
            .chain(&self.negative_words)
            .chain(&self.polarizable_nouns)
            .chain(&self.neutral_words)
    }

    pub fn word_classes(&self) -> BTreeMap<String, WordClass> {
        let mut out = BTreeMap::new();
        for (list, class) in [
            (&self.positive_words, WordClass::Positive),
            (&self.negative_words, WordClass::Negative),
            (&self.polarizable_nouns, WordClass::Polarizable),
            (&self.neutral_words, WordClass::Neutral),
        ] {
            for w in list {
                out.insert(w.clone(), class);
            }
        }
        out
    }
}

/// A planted burst: direction sign and the first frame of its window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub modality: Modality,
    pub sign: f64,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTruth {
    pub class: WordClass,
    pub contribution: f64,
    pub burst: Option<Burst>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceTruth {
    pub id: String,
    pub words: Vec<WordTruth>,
    /// Label before noise: clamp(sum of contributions, -3, 3).
    pub clean_label: f64,
}

/// Directions and vectors shared by every split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignal {
    pub sentiment_axis: Vec<f64>,
    pub inversion_direction: Vec<f64>,
    pub polarity_direction: Vec<f64>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub classes: BTreeMap<String, WordClass>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSplits {
    pub train: Vec<AlignedUtterance>,
    pub valid: Vec<AlignedUtterance>,
    pub test: Vec<AlignedUtterance>,
    pub train_truth: Vec<UtteranceTruth>,
    pub valid_truth: Vec<UtteranceTruth>,
    pub test_truth: Vec<UtteranceTruth>,
    pub planted: PlantedSignal,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    normalize(gaussian(rng, n))
}

/// Random unit vector orthogonal to `axis` (a unit vector).
fn unit_orthogonal(rng: &mut ChaCha8Rng, axis: &[f64]) -> Vec<f64> {
    let mut v = gaussian(rng, axis.len());
    let dot: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    for (x, a) in v.iter_mut().zip(axis) {
        *x -= dot * a;
    }
    normalize(v)
}

fn plant(frames: &mut [Vec<f64>], direction: &[f64], amplitude: f64, width: usize, start: usize) {
    let t = frames.len();
    let compensation = amplitude * width as f64 / (t - width) as f64;
    for (i, frame) in frames.iter_mut().enumerate() {
        let scale = if (start..start + width).contains(&i) {
            amplitude
        } else {
            -compensation
        };
        for (x, u) in frame.iter_mut().zip(direction) {
            *x += scale * u;
        }
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    planted: PlantedSignal,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn span(&mut self, range: [usize; 2], dim: usize) -> Vec<Vec<f64>> {
        let t = self.rng.gen_range(range[0]..=range[1]);
        (0..t)
            .map(|_| gaussian(&mut self.rng, dim).into_iter().map(|x| x * self.spec.frame_noise).collect())
            .collect()
    }

    fn burst(&mut self, frames: &mut [Vec<f64>], modality: Modality, sign: f64) -> Burst {
        let width = self.spec.pattern_frames;
        let start = self.rng.gen_range(0..=frames.len() - width);
        let amplitude = sign * self.spec.snr * self.spec.frame_noise;
        let dir = match modality {
            Modality::Visual => &self.planted.inversion_direction,
            Modality::Acoustic => &self.planted.polarity_direction,
        };
        plant(frames, dir, amplitude, width, start);
        Burst { modality, sign, start }
    }

    fn pick_signed_word(&mut self) -> String {
        let spec = self.spec;
        let list = if self.rng.gen_bool(spec.noun_fraction) {
            &spec.polarizable_nouns
        } else if self.rng.gen_bool(0.5) {
            &spec.positive_words
        } else {
            &spec.negative_words
        };
        list.choose(&mut self.rng).expect("validated nonempty").clone()
    }

    fn utterance(&mut self, id: String) -> (AlignedUtterance, UtteranceTruth) {
        let spec = self.spec;
        let n = self.rng.gen_range(spec.words_per_utterance[0]..=spec.words_per_utterance[1]);
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(&mut self.rng);
        let signed: HashSet<usize> = slots[..spec.signed_words].iter().copied().collect();

        let mut utt = AlignedUtterance {
            id: id.clone(),
            words: Vec::with_capacity(n),
            embeddings: Vec::with_capacity(n),
            visual: Vec::with_capacity(n),
            acoustic: Vec::with_capacity(n),
            label: Label::Regression(0.0),
        };
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let word = if signed.contains(&i) {
                self.pick_signed_word()
            } else {
                spec.neutral_words.choose(&mut self.rng).expect("validated nonempty").clone()
            };
            let class = self.planted.classes[&word];
            let mut visual = self.span(spec.visual_frames, spec.visual_dim);
            let mut acoustic = self.span(spec.acoustic_frames, spec.acoustic_dim);
            let mut intensity = 1.0;
            let (contribution, burst) = match class {
                WordClass::Positive | WordClass::Negative => {
                    if spec.intensity_jitter > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        intensity = (spec.intensity_jitter * z).exp();
                    }
                    let sign = if class == WordClass::Positive { intensity } else { -intensity };
                    if self.rng.gen_bool(spec.inversion_prob) {
                        (-sign, Some(self.burst(&mut visual, Modality::Visual, 1.0)))
                    } else {
                        (sign, None)
                    }
                }
                WordClass::Polarizable => {
                    let sign = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    (sign, Some(self.burst(&mut acoustic, Modality::Acoustic, sign)))
                }
                WordClass::Neutral => {
                    let burst = if self.rng.gen_bool(spec.distractor_prob) {
                        if self.rng.gen_bool(0.5) {
                            Some(self.burst(&mut visual, Modality::Visual, 1.0))
                        } else {
                            let sign = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                            Some(self.burst(&mut acoustic, Modality::Acoustic, sign))
                        }
                    } else {
                        None
                    };
                    (0.0, burst)
                }
            };
            let mut embedding = self.planted.embeddings[&word].clone();
            if intensity != 1.0 {
                let extra = intensity - 1.0;
                let along: f64 = embedding.iter().zip(&self.planted.sentiment_axis).map(|(e, s)| e * s).sum();
                for (x, s) in embedding.iter_mut().zip(&self.planted.sentiment_axis) {
                    *x += extra * along * s;
                }
            }
            if spec.embedding_jitter > 0.0 {
                let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                let sd = spec.embedding_jitter * norm / (embedding.len() as f64).sqrt();
                for x in &mut embedding {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *x += sd * z;
                }
            }
            utt.words.push(word);
            utt.embeddings.push(Tensor::vector(embedding));
            utt.visual.push(Tensor::from_rows(&visual).expect("rectangular span"));
            utt.acoustic.push(Tensor::from_rows(&acoustic).expect("rectangular span"));
            truth.push(WordTruth {
                class,
                contribution,
                burst,
            });
        }
        let clean = truth.iter().map(|w| w.contribution).sum::<f64>().clamp(-3.0, 3.0);
        let noise: f64 = StandardNormal.sample(&mut self.rng);
        utt.label = Label::Regression(clean + spec.label_noise * noise);
        (
            utt,
            UtteranceTruth {
                id,
                words: truth,
                clean_label: clean,
            },
        )
    }

    fn split(&mut self, name: &str, size: usize) -> (Vec<AlignedUtterance>, Vec<UtteranceTruth>) {
        (0..size).map(|i| self.utterance(format!("{name}-{i:05}"))).unzip()
    }
}

fn plant_signal(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> PlantedSignal {
    let sentiment_axis = unit(rng, spec.embedding_dim);
    let inversion_direction = unit(rng, spec.visual_dim);
    let polarity_direction = unit(rng, spec.acoustic_dim);
    let classes = spec.word_classes();
    let strength = spec.sentiment_strength;
    let rest = (1.0 - strength * strength).sqrt();
    let mut embeddings = BTreeMap::new();
    // Draw in list order so the table does not depend on map ordering.
    for w in spec.all_words() {
        let r = unit_orthogonal(rng, &sentiment_axis);
        let v: Vec<f64> = match classes[w] {
            WordClass::Positive | WordClass::Negative => {
                let sign = if classes[w] == WordClass::Positive { 1.0 } else { -1.0 };
                sentiment_axis
                    .iter()
                    .zip(&r)
                    .map(|(s, r)| spec.signed_norm * (sign * strength * s + rest * r))
                    .collect()
            }
            WordClass::Polarizable => r.iter().map(|r| spec.signed_norm * r).collect(),
            WordClass::Neutral => r.iter().map(|r| spec.neutral_norm * r).collect(),
        };
        embeddings.insert(w.clone(), v);
    }
    PlantedSignal {
        sentiment_axis,
        inversion_direction,
        polarity_direction,
        embeddings,
        classes,
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSplits, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let planted = plant_signal(spec, &mut rng);
    let mut gen = Generator { spec, planted, rng };
    let (train, train_truth) = gen.split("train", spec.train_size);
    let (valid, valid_truth) = gen.split("valid", spec.valid_size);
    let (test, test_truth) = gen.split("test", spec.test_size);
    Ok(SyntheticSplits {
        train,
        valid,
        test,
        train_truth,
        valid_truth,
        test_truth,
        planted: gen.planted,
    })
}
