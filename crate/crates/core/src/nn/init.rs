use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ParamKind, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights ~ U(−s, s), `s = sqrt(6 / (fan_in + fan_out))`; biases 0 except
    /// the LSTM forget-gate block.
    GlorotUniform { forget_bias: f64 },
    Zeros,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::GlorotUniform { forget_bias: 1.0 }
    }
}

/// Re-initializes every non-fixed parameter. Draws happen in registration
/// order from a generator seeded with `seed` only.
pub fn init_params(store: &mut ParamStore, scheme: &InitScheme, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..store.len() {
        let kind = store.kind(i);
        let value = &mut store.values_mut()[i];
        match (scheme, kind) {
            (_, ParamKind::Fixed) => {}
            (InitScheme::Zeros, _) | (_, ParamKind::Bias) => value.data_mut().fill(0.0),
            (InitScheme::GlorotUniform { forget_bias }, ParamKind::LstmBias { hidden }) => {
                let data = value.data_mut();
                data.fill(0.0);
                data[hidden..2 * hidden].fill(*forget_bias);
            }
            (InitScheme::GlorotUniform { .. }, ParamKind::Weight) => {
                let (fan_out, fan_in) = (value.rows(), value.cols());
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in value.data_mut() {
                    *v = rng.gen_range(-s..s);
                }
            }
        }
    }
}
