use super::{NnError, ParamError, ParamId, ParamKind, ParamStore};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Single-layer unidirectional LSTM. Gate blocks are stacked `[i, f, g, o]`
/// along the rows of `w_ih` (`4d×k`), `w_hh` (`4d×d`) and `bias` (`4d`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self, ParamError> {
        let g = 4 * hidden;
        Ok(Self {
            w_ih: store.register_kind(&format!("{prefix}.w_ih"), Tensor::zeros(&[g, input]), ParamKind::Weight)?,
            w_hh: store.register_kind(&format!("{prefix}.w_hh"), Tensor::zeros(&[g, hidden]), ParamKind::Weight)?,
            bias: store.register_kind(
                &format!("{prefix}.bias"),
                Tensor::zeros(&[g]),
                ParamKind::LstmBias { hidden },
            )?,
            input,
            hidden,
        })
    }

    /// `4·(d·k + d·d + d)`
    pub fn num_scalars(input: usize, hidden: usize) -> usize {
        4 * (hidden * input + hidden * hidden + hidden)
    }
}

/// `W x + b`, with an optional bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineParams {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl AffineParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        with_bias: bool,
    ) -> Result<Self, ParamError> {
        let weight = store.register_kind(&format!("{prefix}.weight"), Tensor::zeros(&[output, input]), ParamKind::Weight)?;
        let bias = if with_bias {
            Some(store.register_kind(&format!("{prefix}.bias"), Tensor::zeros(&[output]), ParamKind::Bias)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }
}

pub fn affine(tape: &mut Tape, p: &AffineParams, params: &[Var], x: Var) -> Result<Var, TensorError> {
    let y = tape.matmul(params[p.weight.index()], x)?;
    match p.bias {
        Some(b) => tape.add(y, params[b.index()]),
        None => Ok(y),
    }
}

/// One LSTM update. Returns `(h', c')`.
pub fn lstm_cell_step(
    tape: &mut Tape,
    p: &LstmParams,
    params: &[Var],
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), TensorError> {
    let d = p.hidden;
    let zx = tape.matmul(params[p.w_ih.index()], x)?;
    let zh = tape.matmul(params[p.w_hh.index()], h)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add(z, params[p.bias.index()])?;

    let i = tape.slice(z, 0, d)?;
    let f = tape.slice(z, d, d)?;
    let g = tape.slice(z, 2 * d, d)?;
    let o = tape.slice(z, 3 * d, d)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;

    let keep = tape.hadamard(f, c)?;
    let write = tape.hadamard(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.hadamard(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs the LSTM from a zero state over the rows of `seq` (`T×k`) and returns
/// the final hidden state.
pub fn lstm_run(tape: &mut Tape, p: &LstmParams, params: &[Var], seq: &Tensor) -> Result<Var, NnError> {
    if seq.rank() != 2 {
        return Err(TensorError::Rank {
            op: "lstm_run",
            expected: 2,
            got: seq.shape().to_vec(),
        }
        .into());
    }
    let inputs: Vec<Var> = (0..seq.rows())
        .map(|t| tape.constant(Tensor::vector(seq.row(t).to_vec())))
        .collect();
    lstm_run_vars(tape, p, params, &inputs)
}

/// [`lstm_run`] over inputs already on the tape.
pub fn lstm_run_vars(tape: &mut Tape, p: &LstmParams, params: &[Var], inputs: &[Var]) -> Result<Var, NnError> {
    if inputs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let mut h = tape.constant(Tensor::zeros(&[p.hidden]));
    let mut c = tape.constant(Tensor::zeros(&[p.hidden]));
    for &x in inputs {
        (h, c) = lstm_cell_step(tape, p, params, x, h, c)?;
    }
    Ok(h)
}
