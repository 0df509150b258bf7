use serde::{Deserialize, Serialize};

use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale the whole gradient when its global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: u64,
    anomalies: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients held a non-finite value; parameters were left alone.
    Skipped,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            steps: 0,
            anomalies: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn anomalies(&self) -> u64 {
        self.anomalies
    }
}

/// One Adam update from the gradients held in `store`, which are zeroed
/// afterwards whether or not the step was applied.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> StepOutcome {
    let norm = store.grad_norm();
    if !norm.is_finite() {
        state.anomalies += 1;
        log::warn!("non-finite gradient, skipping step (anomaly {})", state.anomalies);
        store.zero_grads();
        return StepOutcome::Skipped;
    }
    if let Some(max) = cfg.clip_norm {
        if norm > max {
            store.scale_grads(max / norm);
        }
    }
    state.steps += 1;
    let t = state.steps as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (g, p)) in store.grads_and_values_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (&g, p)) in g.data().iter().zip(p.data_mut()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    store.zero_grads();
    StepOutcome::Applied
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("p", Tensor::vector(values)).unwrap();
        s
    }

    fn set_grad(s: &mut ParamStore, g: &[f64]) {
        s.zero_grads();
        let mut tape = crate::tensor::Tape::new();
        let vars = s.bind(&mut tape, true);
        let c = tape.constant(Tensor::vector(g.to_vec()));
        let prod = tape.hadamard(vars[0], c).unwrap();
        let root = tape.sum(prod).unwrap();
        tape.backward(root).unwrap();
        s.accumulate_grads(&tape, &vars);
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut s = store(vec![1.0, -2.0]);
        let mut st = AdamState::new(&s);
        assert_eq!(adam_step(&mut s, &mut st, &AdamConfig::default()), StepOutcome::Applied);
        assert_eq!(s.values()[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_by_hand() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            clip_norm: None,
            ..AdamConfig::default()
        };
        let mut s = store(vec![0.5]);
        let mut st = AdamState::new(&s);
        set_grad(&mut s, &[1.0]);
        adam_step(&mut s, &mut st, &cfg);
        // m̂ = v̂ = 1 after bias correction.
        let expected = 0.5 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((s.values()[0].item() - expected).abs() < 1e-15);
        assert_eq!(s.grads()[0].data(), &[0.0]);

        // Second step with g = -1: m = 0.9·0.1 - 0.1, v = 0.999·0.001 + 0.001.
        set_grad(&mut s, &[-1.0]);
        let before = s.values()[0].item();
        adam_step(&mut s, &mut st, &cfg);
        let m = (0.9 * 0.1 + -0.1) / (1.0 - 0.81);
        let v = (0.999 * 0.001 + 0.001) / (1.0 - 0.999f64.powi(2));
        let expected = before - 0.1 * m / (v.sqrt() + 1e-8);
        assert!((s.values()[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn clipping_rescales_globally() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            clip_norm: Some(1.0),
            ..AdamConfig::default()
        };
        let mut s = store(vec![0.0, 0.0]);
        let mut st = AdamState::new(&s);
        set_grad(&mut s, &[30.0, 40.0]);
        adam_step(&mut s, &mut st, &cfg);
        // Adam normalizes per coordinate, so only the sign survives here.
        let p = s.values()[0].data();
        assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] + 0.1).abs() < 1e-6);
        assert!((st.m[0].data()[0] - 0.1 * 0.6).abs() < 1e-15);
        assert!((st.m[0].data()[1] - 0.1 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut s = store(vec![1.0]);
        let mut st = AdamState::new(&s);
        set_grad(&mut s, &[f64::NAN]);
        assert_eq!(adam_step(&mut s, &mut st, &AdamConfig::default()), StepOutcome::Skipped);
        assert_eq!(s.values()[0].item(), 1.0);
        assert_eq!(st.anomalies(), 1);
        assert_eq!(st.steps(), 0);
        assert_eq!(s.grads()[0].data(), &[0.0]);
    }
}
