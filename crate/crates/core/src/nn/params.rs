use std::collections::HashMap;

use crate::tensor::{Tape, Tensor, Var};

/// Index of a parameter in its [`ParamStore`]. Also indexes the `Var` slice
/// returned by [`ParamStore::bind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How [`super::init_params`] treats a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Matrix initialized from a fan-in/fan-out scaled uniform.
    Weight,
    Bias,
    /// Stacked `[i, f, g, o]` LSTM bias of hidden size `hidden`.
    LstmBias { hidden: usize },
    /// Left untouched by initialization.
    Fixed,
}

/// Named parameters in registration order, each with a gradient buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{0}` registered twice")]
    Duplicate(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("parameter `{name}`: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId, ParamError> {
        self.register_kind(name, value, ParamKind::Fixed)
    }

    pub fn register_kind(&mut self, name: &str, value: Tensor, kind: ParamKind) -> Result<ParamId, ParamError> {
        if self.index.contains_key(name) {
            return Err(ParamError::Duplicate(name.to_string()));
        }
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn kind(&self, i: usize) -> ParamKind {
        self.kinds[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn value_at(&self, param: usize, element: usize) -> f64 {
        self.values[param].data()[element]
    }

    pub(crate) fn set_value_at(&mut self, param: usize, element: usize, v: f64) {
        self.values[param].data_mut()[element] = v;
    }

    /// Iterates `(name, value)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Copies every parameter onto `tape` as a leaf, in registration order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.values
            .iter()
            .map(|v| {
                if requires_grad {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                }
            })
            .collect()
    }

    /// Adds the tape's gradients for `vars` into the store's buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &[Var]) {
        for (buf, v) in self.grads.iter_mut().zip(vars) {
            if let Some(g) = tape.grad(*v) {
                for (o, x) in buf.data_mut().iter_mut().zip(g) {
                    *o += x;
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, c: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn grads_and_values_mut(&mut self) -> impl Iterator<Item = (&Tensor, &mut Tensor)> {
        self.grads.iter().zip(self.values.iter_mut())
    }

    /// Replaces the value of a named parameter; the shape must agree.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), ParamError> {
        let id = self.id(name).ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        let current = &mut self.values[id.0];
        if current.shape() != value.shape() {
            return Err(ParamError::ShapeMismatch {
                name: name.to_string(),
                expected: current.shape().to_vec(),
                found: value.shape().to_vec(),
            });
        }
        *current = value;
        Ok(())
    }

    /// Order-sensitive FNV-1a hash over all value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.values {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
