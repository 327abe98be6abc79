//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Nodes are
//! appended in evaluation order, so the node list is already a topological
//! order and [`Tape::backward`] walks it in reverse exactly once.
//!
//! ```
//! use coded_smoothing::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.var(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `Aᵀ·Y` with `A` constant.
    LinearOperator { matrix: Arc<Tensor>, input: usize },
    /// `out[i] = in[index[i]]`.
    GatherRows { index: Vec<usize>, input: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRow(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sin(usize),
    Sum(usize),
    Mean(usize),
    Detach,
    SoftmaxCrossEntropy {
        logits: usize,
        target: Tensor,
        probs: Tensor,
    },
    Mse { pred: usize, target: Tensor },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for a single forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A differentiable leaf.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(Tensor::full(out.value.shape(), 1.0));

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let mut send = |to: usize, delta: Tensor| {
                if !nodes[to].requires_grad {
                    return;
                }
                match &mut grads[to] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                            *a += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    if nodes[*a].requires_grad {
                        send(*a, reshape_like(g.matmul_t(bv)?, av));
                    }
                    if nodes[*b].requires_grad {
                        send(*b, reshape_like(av.t_matmul(&g)?, bv));
                    }
                }
                Op::LinearOperator { matrix, input } => {
                    let iv = &nodes[*input].value;
                    send(*input, reshape_like(matrix.matmul(&g)?, iv));
                }
                Op::GatherRows { index, input } => {
                    let iv = &nodes[*input].value;
                    let c = iv.cols();
                    let mut d = Tensor::zeros(iv.shape());
                    let dd = d.data_mut();
                    for (i, &src) in index.iter().enumerate() {
                        for j in 0..c {
                            dd[src * c + j] += g.data()[i * c + j];
                        }
                    }
                    send(*input, d);
                }
                Op::Add(a, b) => {
                    send(*a, unbroadcast(&g, &nodes[*a].value));
                    send(*b, unbroadcast(&g, &nodes[*b].value));
                }
                Op::Sub(a, b) => {
                    send(*a, unbroadcast(&g, &nodes[*a].value));
                    send(*b, unbroadcast(&g, &nodes[*b].value).scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    send(*a, unbroadcast(&broadcast_mul(&g, bv), av));
                    send(*b, unbroadcast(&broadcast_mul(&g, av), bv));
                }
                Op::Scale(a, s) => send(*a, g.scale(*s)),
                Op::AddRow(a, bias) => {
                    send(*a, g.clone());
                    let bv = &nodes[*bias].value;
                    let c = bv.numel();
                    let mut d = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (d, r) in d.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                    send(*bias, Tensor::raw(bv.shape().to_vec(), d));
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 })?,
                    );
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, g.zip_map(y, |g, y| g * (1.0 - y * y))?);
                }
                Op::Sin(a) => {
                    let x = &nodes[*a].value;
                    send(*a, g.zip_map(x, |g, x| g * x.cos())?);
                }
                Op::Sum(a) => {
                    let x = &nodes[*a].value;
                    send(*a, Tensor::full(x.shape(), g.item()));
                }
                Op::Mean(a) => {
                    let x = &nodes[*a].value;
                    send(*a, Tensor::full(x.shape(), g.item() / x.numel() as f64));
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let scale = g.item() / probs.rows() as f64;
                    send(*logits, probs.zip_map(target, |p, t| (p - t) * scale)?);
                }
                Op::Mse { pred, target } => {
                    let pv = &nodes[*pred].value;
                    let scale = 2.0 * g.item() / pv.numel() as f64;
                    send(*pred, pv.zip_map(target, |p, t| (p - t) * scale)?);
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    Tensor::raw(like.shape().to_vec(), t.into_data())
}

/// Elementwise product where either side may be a single element.
fn broadcast_mul(a: &Tensor, b: &Tensor) -> Tensor {
    if b.numel() == 1 {
        a.scale(b.item())
    } else if a.numel() == 1 {
        b.scale(a.item())
    } else {
        a.zip_map(b, |x, y| x * y).expect("shapes checked at record time")
    }
}

/// Reduces an incoming gradient to the operand's shape.
fn unbroadcast(g: &Tensor, operand: &Tensor) -> Tensor {
    if g.shape() == operand.shape() {
        g.clone()
    } else {
        Tensor::full(operand.shape(), g.sum())
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    let av = |i: usize| if a.numel() == 1 { a.data()[0] } else { a.data()[i] };
    let bv = |i: usize| if b.numel() == 1 { b.data()[0] } else { b.data()[i] };
    Tensor::raw(shape, (0..n).map(|i| f(av(i), bv(i))).collect())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(self, op: Op, value: Tensor) -> Var<'t> {
        let rg = self.tape.requires_grad(self.id);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, op: Op, value: Tensor) -> Var<'t> {
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().matmul(&other.value())?;
        Ok(self.binary(other, Op::MatMul(self.id, other.id), v))
    }

    /// Returns `Aᵀ·self` for a constant operator `A` of shape `[n × m]`.
    /// No gradient flows into `A`.
    pub fn apply_linear_operator(self, matrix: &Arc<Tensor>) -> Result<Var<'t>> {
        let x = self.value();
        if matrix.shape().len() != 2 || matrix.rows() != x.rows() {
            return Err(Error::shape("apply_linear_operator", matrix.shape(), x.shape()));
        }
        let v = linear_operator_kernel(matrix, &x)?;
        Ok(self.unary(
            Op::LinearOperator {
                matrix: Arc::clone(matrix),
                input: self.id,
            },
            v,
        ))
    }

    /// `out[i] = self[index[i]]` along axis 0.
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for {} rows",
                x.rows()
            )));
        }
        let v = x.select_rows(index);
        Ok(self.unary(
            Op::GatherRows {
                index: index.to_vec(),
                input: self.id,
            },
            v,
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape("add", &a, &b)?;
        let v = broadcast_zip(&a, &b, shape, |x, y| x + y);
        Ok(self.binary(other, Op::Add(self.id, other.id), v))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape("sub", &a, &b)?;
        let v = broadcast_zip(&a, &b, shape, |x, y| x - y);
        Ok(self.binary(other, Op::Sub(self.id, other.id), v))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape("mul", &a, &b)?;
        let v = broadcast_zip(&a, &b, shape, |x, y| x * y);
        Ok(self.binary(other, Op::Mul(self.id, other.id), v))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let v = self.value().scale(s);
        self.unary(Op::Scale(self.id, s), v)
    }

    /// Adds a bias row (`[1 × c]` or `[c]`) to every row of a `[r × c]` value.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        if b.numel() != x.cols() {
            return Err(Error::shape("add_row", x.shape(), b.shape()));
        }
        let mut v = (*x).clone();
        let c = b.numel();
        for row in v.data_mut().chunks_mut(c) {
            for (r, bb) in row.iter_mut().zip(b.data()) {
                *r += bb;
            }
        }
        Ok(self.binary(bias, Op::AddRow(self.id, bias.id), v))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value().map(|x| x.max(0.0));
        self.unary(Op::Relu(self.id), v)
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.value().map(f64::tanh);
        self.unary(Op::Tanh(self.id), v)
    }

    pub fn sin(self) -> Var<'t> {
        let v = self.value().map(f64::sin);
        self.unary(Op::Sin(self.id), v)
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(Op::Sum(self.id), v)
    }

    pub fn mean(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().mean());
        self.unary(Op::Mean(self.id), v)
    }

    /// Identity on the forward pass; blocks every gradient on the way back.
    pub fn detach(self) -> Var<'t> {
        let v = (*self.value()).clone();
        self.tape.push(v, Op::Detach, false)
    }

    /// Mean over rows of `-Σ_j t_ij log softmax(x)_ij`.
    ///
    /// Target rows must be probability vectors (sum to 1 within 1e-8).
    pub fn softmax_cross_entropy(self, target: &Tensor) -> Result<Var<'t>> {
        let x = self.value();
        if x.shape().len() != 2 || x.shape() != target.shape() {
            return Err(Error::shape("softmax_cross_entropy", x.shape(), target.shape()));
        }
        let (r, c) = x.as_matrix();
        for i in 0..r {
            let s: f64 = target.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-8 || target.row(i).iter().any(|&t| t < 0.0) {
                return Err(Error::invalid(format!(
                    "target row {i} is not a probability vector (sum {s})"
                )));
            }
        }
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = x.row(i);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + z.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
                let t = target.get(i, j);
                if t != 0.0 {
                    loss -= t * (row[j] - lse);
                }
            }
        }
        let v = Tensor::scalar(loss / r as f64);
        Ok(self.unary(
            Op::SoftmaxCrossEntropy {
                logits: self.id,
                target: target.clone(),
                probs: Tensor::raw(vec![r, c], probs),
            },
            v,
        ))
    }

    /// Mean squared error over all elements.
    pub fn mse(self, target: &Tensor) -> Result<Var<'t>> {
        let x = self.value();
        if x.shape() != target.shape() {
            return Err(Error::shape("mse", x.shape(), target.shape()));
        }
        let v = Tensor::scalar(
            x.data()
                .iter()
                .zip(target.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / x.numel() as f64,
        );
        Ok(self.unary(
            Op::Mse {
                pred: self.id,
                target: target.clone(),
            },
            v,
        ))
    }
}

/// `Aᵀ·Y`, keeping the trailing shape of `Y`. Shared by the tape op and the
/// gradient-free paths so both produce identical bits.
pub fn linear_operator_kernel(matrix: &Tensor, y: &Tensor) -> Result<Tensor> {
    let out = matrix.t_matmul(y)?;
    let mut shape = y.shape().to_vec();
    shape[0] = matrix.cols();
    Ok(Tensor::raw(shape, out.into_data()))
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zeros when nothing reached it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&v.shape()))
    }
}

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            momentum,
        }
    }

    pub fn accumulate(&mut self, g: &Tensor) {
        for (a, b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
    }
}

/// `v ← momentum·v + g; θ ← θ − lr·v`, then zeroes every gradient.
pub fn sgd_momentum_step(params: &mut [Parameter], lr: f64, momentum: f64) {
    for p in params {
        let v = p.momentum.data_mut();
        let g = p.grad.data_mut();
        let theta = p.value.data_mut();
        for i in 0..theta.len() {
            v[i] = momentum * v[i] + g[i];
            theta[i] -= lr * v[i];
            g[i] = 0.0;
        }
    }
}
