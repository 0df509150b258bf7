use super::{sigmoid, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Recorded operation. Parents always have smaller indices than the node
/// that consumes them, so creation order is a topological order.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    /// `[m×k]·[k×n]`, or `[m×k]·[k]` producing `[m]`.
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    /// Rank-0/1-element scalar variable times a tensor.
    ScaleBy { scalar: Var, x: Var },
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Concat(Var, Var),
    Slice { x: Var, start: usize, len: usize },
    L2Norm(Var),
    Sum(Var),
    Mean(Var),
    /// Scalar quotient.
    Div(Var, Var),
    /// `min(x, c)` for a scalar `x`.
    MinConst(Var, f64),
    /// Mean binary cross-entropy of sigmoid(logits) against fixed targets.
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded, append-only computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    validate: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any op producing a NaN or infinity.
    pub fn with_validation() -> Self {
        Self {
            validate: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var, TensorError> {
        if self.validate && !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name(&op) });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn expect_rank(&self, op: &'static str, v: Var, rank: usize) -> Result<(), TensorError> {
        let s = self.shape(v);
        if s.len() != rank {
            return Err(TensorError::Rank {
                op,
                expected: rank,
                got: s.to_vec(),
            });
        }
        Ok(())
    }

    fn expect_scalar(&self, op: &'static str, v: Var) -> Result<(), TensorError> {
        if self.value(v).len() != 1 {
            return Err(TensorError::Rank {
                op,
                expected: 0,
                got: self.shape(v).to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.expect_rank("matmul", a, 2)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k) = (sa[0], sa[1]);
        let (kb, n, out_shape) = match sb.len() {
            1 => (sb[0], 1, vec![m]),
            2 => (sb[0], sb[1], vec![m, sb[1]]),
            _ => {
                return Err(TensorError::Rank {
                    op: "matmul",
                    expected: 2,
                    got: sb,
                })
            }
        };
        if k != kb {
            return Err(TensorError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &ad[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate() {
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(value, op, &[a, b])
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push(value, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("hadamard", a, b, Op::Hadamard(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.map(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn scale_by(&mut self, scalar: Var, x: Var) -> Result<Var, TensorError> {
        self.expect_scalar("scale_by", scalar)?;
        let s = self.value(scalar).item();
        self.map(x, Op::ScaleBy { scalar, x }, |v| s * v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map(x, Op::Abs(x), f64::abs)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.expect_rank("concat", a, 1)?;
        self.expect_rank("concat", b, 1)?;
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::vector(data), Op::Concat(a, b), &[a, b])
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        self.expect_rank("slice", x, 1)?;
        let total = self.value(x).len();
        if start + len > total {
            return Err(TensorError::OutOfBounds {
                op: "slice",
                start,
                end: start + len,
                len: total,
            });
        }
        let data = self.value(x).data()[start..start + len].to_vec();
        self.push(Tensor::vector(data), Op::Slice { x, start, len }, &[x])
    }

    pub fn l2_norm(&mut self, x: Var) -> Result<Var, TensorError> {
        self.expect_rank("l2_norm", x, 1)?;
        let n = self.value(x).norm();
        self.push(Tensor::scalar(n), Op::L2Norm(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.expect_scalar("div", a)?;
        self.expect_scalar("div", b)?;
        let q = self.value(a).item() / self.value(b).item();
        self.push(Tensor::scalar(q), Op::Div(a, b), &[a, b])
    }

    pub fn min_const(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.expect_scalar("min_const", x)?;
        let v = self.value(x).item().min(c);
        self.push(Tensor::scalar(v), Op::MinConst(x, c), &[x])
    }

    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, TensorError> {
        self.expect_rank("bce_with_logits", logits, 1)?;
        let z = self.value(logits).data();
        if z.len() != targets.len() {
            return Err(TensorError::Shape {
                op: "bce_with_logits",
                left: vec![z.len()],
                right: vec![targets.len()],
            });
        }
        let total: f64 = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / z.len() as f64);
        let op = Op::BceWithLogits {
            logits,
            targets: targets.to_vec(),
        };
        self.push(value, op, &[logits])
    }

    /// Reverse pass from a scalar root. Replaces gradients from any earlier
    /// backward call on this tape.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = if vb.rank() == 1 { 1 } else { vb.shape()[1] };
                let (ad, bd) = (va.data(), vb.data());
                if self.requires_grad(*a) {
                    // dA = G · Bᵀ
                    let ga = self.slot(grads, *a);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            ga[i * k + p] += dot;
                        }
                    }
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · G
                    let gb = self.slot(grads, *b);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().map(|v| -v));
            }
            Op::Hadamard(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, g.iter().zip(db).map(|(g, y)| g * y));
                self.accumulate(grads, *b, g.iter().zip(da).map(|(g, x)| g * x));
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.iter().map(|v| v * c)),
            Op::ScaleBy { scalar, x } => {
                let s = self.value(*scalar).item();
                let xd = self.value(*x).data();
                let ds: f64 = g.iter().zip(xd).map(|(g, x)| g * x).sum();
                self.accumulate(grads, *scalar, std::iter::once(ds));
                self.accumulate(grads, *x, g.iter().map(|v| v * s));
            }
            Op::Sigmoid(x) => {
                self.accumulate(grads, *x, g.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)))
            }
            Op::Tanh(x) => {
                self.accumulate(grads, *x, g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)))
            }
            Op::Abs(x) => {
                let xd = self.value(*x).data();
                self.accumulate(grads, *x, g.iter().zip(xd).map(|(g, x)| g * sign(*x)));
            }
            Op::Concat(a, b) => {
                let na = self.value(*a).len();
                self.accumulate(grads, *a, g[..na].iter().copied());
                self.accumulate(grads, *b, g[na..].iter().copied());
            }
            Op::Slice { x, start, len } => {
                if self.requires_grad(*x) {
                    let gx = self.slot(grads, *x);
                    for (o, v) in gx[*start..start + len].iter_mut().zip(g) {
                        *o += v;
                    }
                }
            }
            Op::L2Norm(x) => {
                let n = out[0];
                let xd = self.value(*x).data();
                // Zero vector: subgradient 0.
                let inv = if n > 0.0 { g[0] / n } else { 0.0 };
                self.accumulate(grads, *x, xd.iter().map(|v| v * inv));
            }
            Op::Sum(x) => {
                let len = self.value(*x).len();
                self.accumulate(grads, *x, std::iter::repeat_n(g[0], len));
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                let v = g[0] / len as f64;
                self.accumulate(grads, *x, std::iter::repeat_n(v, len));
            }
            Op::Div(a, b) => {
                let (x, y) = (self.value(*a).item(), self.value(*b).item());
                self.accumulate(grads, *a, std::iter::once(g[0] / y));
                self.accumulate(grads, *b, std::iter::once(-g[0] * x / (y * y)));
            }
            Op::MinConst(x, c) => {
                let v = self.value(*x).item();
                let d = if v < *c { g[0] } else { 0.0 };
                self.accumulate(grads, *x, std::iter::once(d));
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits).data();
                let k = z.len() as f64;
                self.accumulate(
                    grads,
                    *logits,
                    z.iter().zip(targets).map(|(&z, &y)| g[0] * (sigmoid(z) - y) / k),
                );
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl Iterator<Item = f64>) {
        if !self.requires_grad(v) {
            return;
        }
        let slot = self.slot(grads, v);
        for (o, c) in slot.iter_mut().zip(contrib) {
            *o += c;
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Hadamard(..) => "hadamard",
        Op::Scale(..) => "scale",
        Op::ScaleBy { .. } => "scale_by",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Abs(_) => "abs",
        Op::Concat(..) => "concat",
        Op::Slice { .. } => "slice",
        Op::L2Norm(_) => "l2_norm",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Div(..) => "div",
        Op::MinConst(..) => "min_const",
        Op::BceWithLogits { .. } => "bce_with_logits",
    }
}
