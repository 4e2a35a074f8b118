//! Reverse-mode differentiation over the handful of primitives the GNN layers
//! and the soup construction need.
//!
//! A [`GradTape`] records each primitive in evaluation order together with
//! whatever it must keep for the backward pass. Inputs that outlive the tape
//! (graph features, ingredient weights, trainable parameters) are borrowed
//! rather than copied, so the tape's tracked footprint is just the
//! intermediate activations. [`GradTape::backward`] walks the records in
//! reverse, accumulating gradients in `f64`, and hands back `f32` gradients
//! for every leaf that was marked as requiring one.

use std::borrow::Cow;

use rand::Rng;

use super::alloc::TrackedVec;
use super::kernels;
use super::{CsrMat, DenseMat, TensorError};
use crate::rng;

/// Handle to a value recorded on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    Spmm {
        adj: &'a CsrMat,
        x: Var,
    },
    Matmul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    ScaleAdd {
        acc: Var,
        s: Var,
        m: Var,
    },
    Pick {
        x: Var,
        row: usize,
        col: usize,
    },
    Relu {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: TrackedVec<f32>,
    },
    RowSoftmax {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<u32>,
        probs: TrackedVec<f64>,
    },
    Sum {
        x: Var,
    },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Spmm { .. } => "spmm",
            Op::Matmul { .. } => "matmul",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::AddBias { .. } => "add_bias",
            Op::ScaleAdd { .. } => "scale_add",
            Op::Pick { .. } => "pick",
            Op::Relu { .. } => "relu",
            Op::Dropout { .. } => "dropout",
            Op::RowSoftmax { .. } => "row_softmax",
            Op::CrossEntropy { .. } => "cross_entropy_masked",
            Op::Sum { .. } => "sum",
        }
    }
}

struct Node<'a> {
    value: Cow<'a, DenseMat>,
    op: Op<'a>,
    requires_grad: bool,
}

/// Gradients produced by [`GradTape::backward`], one per marked leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<DenseMat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMat> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
pub struct GradTape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> GradTape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMat {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Names of the recorded operations, in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn push(&mut self, value: Cow<'a, DenseMat>, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: DenseMat, op: Op<'a>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    /// Owned leaf.
    pub fn leaf(&mut self, value: DenseMat, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Borrowed leaf that receives no gradient.
    pub fn constant(&mut self, value: &'a DenseMat) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, value: &'a DenseMat) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn spmm(&mut self, adj: &'a CsrMat, x: Var) -> Result<Var, TensorError> {
        let out = kernels::spmm(adj, self.value(x))?;
        Ok(self.push_op(out, Op::Spmm { adj, x }, &[x]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push_op(out, Op::Matmul { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let mut out = self.value(a).clone();
        kernels::add_in_place(&mut out, self.value(b))?;
        Ok(self.push_op(out, Op::Add { a, b }, &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                left: x.shape(),
                right: y.shape(),
            });
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = DenseMat::from_vec(x.rows(), x.cols(), data)
            .map_err(|_| TensorError::NonFinite { op: "mul" })?;
        Ok(self.push_op(out, Op::Mul { a, b }, &[a, b]))
    }

    /// Adds the `1 x cols` row `bias` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        kernels::add_bias_in_place(&mut out, self.value(bias))?;
        Ok(self.push_op(out, Op::AddBias { x, bias }, &[x, bias]))
    }

    /// `acc + s * m` where `s` is a `1 x 1` value.
    pub fn scale_add(&mut self, acc: Var, s: Var, m: Var) -> Result<Var, TensorError> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(TensorError::NotScalar { shape: sv.shape() });
        }
        let out = kernels::scale_add(self.value(acc), sv.data()[0], self.value(m))?;
        Ok(self.push_op(out, Op::ScaleAdd { acc, s, m }, &[acc, s, m]))
    }

    /// The single entry `x[row, col]` as a `1 x 1` value.
    pub fn pick(&mut self, x: Var, row: usize, col: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if row >= xv.rows() || col >= xv.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "pick",
                left: xv.shape(),
                right: (row, col),
            });
        }
        let out = DenseMat::filled(1, 1, xv.get(row, col));
        Ok(self.push_op(out, Op::Pick { x, row, col }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        kernels::relu_in_place(&mut out);
        Ok(self.push_op(out, Op::Relu { x }, &[x]))
    }

    /// Inverted dropout with keep probability `1 - p`. The mask is a pure
    /// function of `seed`. `p == 0` records nothing and returns `x`.
    pub fn dropout(&mut self, x: Var, p: f32, seed: u64) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let mut r = rng::seeded(seed);
        let xv = self.value(x);
        let mask: Vec<f32> = (0..xv.len())
            .map(|_| if r.random::<f32>() < p { 0.0 } else { scale })
            .collect();
        let mask = TrackedVec::new(mask);
        let data = xv
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(v, m)| v * m)
            .collect();
        let out = DenseMat::from_vec(xv.rows(), xv.cols(), data)
            .map_err(|_| TensorError::NonFinite { op: "dropout" })?;
        Ok(self.push_op(out, Op::Dropout { x, mask }, &[x]))
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = kernels::row_softmax(self.value(x))?;
        Ok(self.push_op(out, Op::RowSoftmax { x }, &[x]))
    }

    /// Mean cross-entropy of `softmax(logits)` over the rows selected by `mask`.
    pub fn cross_entropy_masked(
        &mut self,
        logits: Var,
        labels: &[u32],
        mask: &[bool],
    ) -> Result<Var, TensorError> {
        let (loss, rows, probs) = kernels::masked_cross_entropy(self.value(logits), labels, mask)?;
        let labels = rows.iter().map(|&r| labels[r]).collect();
        let out = DenseMat::filled(1, 1, loss as f32);
        let op = Op::CrossEntropy {
            logits,
            rows,
            labels,
            probs: TrackedVec::new(probs),
        };
        Ok(self.push_op(out, op, &[logits]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let total = self.value(x).sum() as f32;
        let out = DenseMat::filled(1, 1, total);
        out.check_finite("sum")?;
        Ok(self.push_op(out, Op::Sum { x }, &[x]))
    }

    /// Propagates `d loss / d v` to every leaf marked as requiring a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.nodes.is_empty() {
            return Err(TensorError::EmptyTape);
        }
        let loss_shape = self.value(loss).shape();
        if loss_shape != (1, 1) {
            return Err(TensorError::NotScalar { shape: loss_shape });
        }
        let mut grads: Vec<Option<TrackedVec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out: Vec<Option<DenseMat>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads: out });
        }
        grads[loss.0] = Some(TrackedVec::filled(1.0, 1));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(up) = grads[idx].take() else {
                continue;
            };
            let (rows, cols) = node.value.shape();
            let mut send = |v: Var, g: TrackedVec<f64>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {
                    let data: Vec<f32> = up.iter().map(|&g| g as f32).collect();
                    let g = DenseMat::from_vec(rows, cols, data)
                        .map_err(|_| TensorError::NonFinite { op: "backward" })?;
                    out[idx] = Some(g);
                }
                Op::Spmm { adj, x } => send(*x, kernels::grad_spmm(adj, &up, cols)),
                Op::Matmul { a, b } => {
                    if self.nodes[a.0].requires_grad {
                        send(*a, kernels::grad_matmul_lhs(&up, rows, self.value(*b)));
                    }
                    if self.nodes[b.0].requires_grad {
                        send(*b, kernels::grad_matmul_rhs(self.value(*a), &up, cols));
                    }
                }
                Op::Add { a, b } => {
                    if self.nodes[a.0].requires_grad {
                        send(*a, up.clone());
                    }
                    send(*b, up);
                }
                Op::Mul { a, b } => {
                    let scaled = |other: &DenseMat| {
                        TrackedVec::new(
                            up.iter()
                                .zip(other.data())
                                .map(|(&u, &o)| u * o as f64)
                                .collect(),
                        )
                    };
                    if self.nodes[a.0].requires_grad {
                        send(*a, scaled(self.value(*b)));
                    }
                    if self.nodes[b.0].requires_grad {
                        send(*b, scaled(self.value(*a)));
                    }
                }
                Op::AddBias { x, bias } => {
                    if self.nodes[bias.0].requires_grad {
                        let mut gb = TrackedVec::filled(0f64, cols);
                        for r in 0..rows {
                            for (g, &u) in gb.iter_mut().zip(&up[r * cols..(r + 1) * cols]) {
                                *g += u;
                            }
                        }
                        send(*bias, gb);
                    }
                    send(*x, up);
                }
                Op::ScaleAdd { acc, s, m } => {
                    let sv = self.value(*s).data()[0] as f64;
                    if self.nodes[s.0].requires_grad {
                        let inner: f64 = up
                            .iter()
                            .zip(self.value(*m).data())
                            .map(|(&u, &x)| u * x as f64)
                            .sum();
                        send(*s, TrackedVec::new(vec![inner]));
                    }
                    if self.nodes[m.0].requires_grad {
                        send(*m, TrackedVec::new(up.iter().map(|&u| u * sv).collect()));
                    }
                    send(*acc, up);
                }
                Op::Pick { x, row, col } => {
                    let xv = self.value(*x);
                    let mut g = TrackedVec::filled(0f64, xv.len());
                    g[row * xv.cols() + col] = up[0];
                    send(*x, g);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let g = up
                        .iter()
                        .zip(xv.data())
                        .map(|(&u, &v)| if v > 0.0 { u } else { 0.0 })
                        .collect();
                    send(*x, TrackedVec::new(g));
                }
                Op::Dropout { x, mask } => {
                    let g = up
                        .iter()
                        .zip(mask.iter())
                        .map(|(&u, &m)| u * m as f64)
                        .collect();
                    send(*x, TrackedVec::new(g));
                }
                Op::RowSoftmax { x } => {
                    let y = &node.value;
                    let mut g = TrackedVec::filled(0f64, rows * cols);
                    for r in 0..rows {
                        let yr = y.row(r);
                        let ur = &up[r * cols..(r + 1) * cols];
                        let dot: f64 = ur.iter().zip(yr).map(|(&u, &p)| u * p as f64).sum();
                        for c in 0..cols {
                            g[r * cols + c] = yr[c] as f64 * (ur[c] - dot);
                        }
                    }
                    send(*x, g);
                }
                Op::CrossEntropy {
                    logits,
                    rows: picked,
                    labels,
                    probs,
                } => {
                    let lv = self.value(*logits);
                    let c = lv.cols();
                    let scale = up[0] / picked.len() as f64;
                    let mut g = TrackedVec::filled(0f64, lv.len());
                    for (i, (&r, &label)) in picked.iter().zip(labels).enumerate() {
                        for k in 0..c {
                            let onehot = if k == label as usize { 1.0 } else { 0.0 };
                            g[r * c + k] = (probs[i * c + k] - onehot) * scale;
                        }
                    }
                    send(*logits, g);
                }
                Op::Sum { x } => {
                    let n = self.value(*x).len();
                    send(*x, TrackedVec::filled(up[0], n));
                }
            }
        }
        Ok(Gradients { grads: out })
    }
}
