use alloc::vec;
use alloc::vec::Vec;

use super::forward::{self, Activation};
use super::kernels;
use super::ops::Ops;
use super::{NumericsError, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize, end: usize },
    Transpose(Var),
    Reshape(Var),
    Embedding { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Activation(Var, Activation),
    MaskedFill { x: Var, mask: Vec<bool> },
    Softmax { x: Var, axis: usize },
    Sum(Var),
    LabelSmoothedCe { logits: Var, targets: Vec<usize>, epsilon: f64, pad_id: usize, probs: Vec<f64>, supervised: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Computation tape for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and the reverse of the node list is a valid topological order for the
/// backward sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`. Values that
    /// did not lie on a path to the loss get zeros.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value"),
            None => Tensor::zeros(node.value.shape()).expect("value shape is valid"),
        }
    }

    pub fn grad_data(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    /// Clears gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = self.any_grad(inputs);
        self.push(value, op, rg)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.backward_done {
            return Err(NumericsError::BackwardTwice);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumericsError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape().to_vec(),
            });
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream, &mut grads);
            grads[i] = Some(upstream);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: &Var| &nodes[v.0].value;
        let needs = |v: &Var| nodes[v.0].requires_grad;
        // Accumulation buffer for an input, allocated on first use.
        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(a).rows(), val(a).cols());
                let n = val(b).cols();
                if needs(a) {
                    kernels::matmul_nt_acc(dy, val(b).data(), slot(grads, nodes, *a), m, n, k);
                }
                if needs(b) {
                    kernels::matmul_tn_acc(val(a).data(), dy, slot(grads, nodes, *b), m, k, n);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = (val(a).rows(), val(a).cols());
                let n = val(b).rows();
                if needs(a) {
                    kernels::matmul_acc(dy, val(b).data(), slot(grads, nodes, *a), m, n, k);
                }
                if needs(b) {
                    kernels::matmul_tn_acc(dy, val(a).data(), slot(grads, nodes, *b), m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if needs(v) {
                        kernels::axpy(1.0, dy, slot(grads, nodes, *v));
                    }
                }
            }
            Op::AddRow(a, row) => {
                if needs(a) {
                    kernels::axpy(1.0, dy, slot(grads, nodes, *a));
                }
                if needs(row) {
                    let c = val(row).numel();
                    let g = slot(grads, nodes, *row);
                    for chunk in dy.chunks_exact(c) {
                        kernels::axpy(1.0, chunk, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let g = slot(grads, nodes, *a);
                    for ((gi, d), bv) in g.iter_mut().zip(dy).zip(val(b).data()) {
                        *gi += d * bv;
                    }
                }
                if needs(b) {
                    let g = slot(grads, nodes, *b);
                    for ((gi, d), av) in g.iter_mut().zip(dy).zip(val(a).data()) {
                        *gi += d * av;
                    }
                }
            }
            Op::Scale(a, f) => {
                if needs(a) {
                    kernels::axpy(*f, dy, slot(grads, nodes, *a));
                }
            }
            Op::Concat { parts, axis } => {
                let out_shape = nodes[i].value.shape();
                let (outer, total, inner) = kernels::axis_extents(out_shape, *axis);
                let mut offset = 0;
                for p in parts {
                    let len = val(p).shape()[*axis];
                    if needs(p) {
                        let g = slot(grads, nodes, *p);
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * len * inner;
                            kernels::axpy(1.0, &dy[src..src + len * inner], &mut g[dst..dst + len * inner]);
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { input, axis, start, end } => {
                if needs(input) {
                    let (outer, len, inner) = kernels::axis_extents(val(input).shape(), *axis);
                    let width = (end - start) * inner;
                    let g = slot(grads, nodes, *input);
                    for o in 0..outer {
                        let dst = o * len * inner + start * inner;
                        kernels::axpy(1.0, &dy[o * width..(o + 1) * width], &mut g[dst..dst + width]);
                    }
                }
            }
            Op::Transpose(a) => {
                if needs(a) {
                    let (m, n) = (val(a).rows(), val(a).cols());
                    let g = slot(grads, nodes, *a);
                    for r in 0..m {
                        for c in 0..n {
                            g[r * n + c] += dy[c * m + r];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if needs(a) {
                    kernels::axpy(1.0, dy, slot(grads, nodes, *a));
                }
            }
            Op::Embedding { table, ids } => {
                if needs(table) {
                    let d = val(table).cols();
                    let g = slot(grads, nodes, *table);
                    for (r, &id) in ids.iter().enumerate() {
                        kernels::axpy(1.0, &dy[r * d..(r + 1) * d], &mut g[id * d..(id + 1) * d]);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let d = val(gamma).numel();
                if needs(gamma) {
                    let g = slot(grads, nodes, *gamma);
                    for (row_dy, row_xh) in dy.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for c in 0..d {
                            g[c] += row_dy[c] * row_xh[c];
                        }
                    }
                }
                if needs(beta) {
                    let g = slot(grads, nodes, *beta);
                    for row_dy in dy.chunks_exact(d) {
                        kernels::axpy(1.0, row_dy, g);
                    }
                }
                if needs(x) {
                    let gam = val(gamma).data();
                    let g = slot(grads, nodes, *x);
                    let mut dxhat = vec![0.0; d];
                    for (r, is) in inv_std.iter().enumerate() {
                        let row_dy = &dy[r * d..(r + 1) * d];
                        let row_xh = &xhat[r * d..(r + 1) * d];
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for c in 0..d {
                            dxhat[c] = row_dy[c] * gam[c];
                            sum_dxh += dxhat[c];
                            sum_dxh_xh += dxhat[c] * row_xh[c];
                        }
                        let k = is / d as f64;
                        for c in 0..d {
                            g[r * d + c] += k * (d as f64 * dxhat[c] - sum_dxh - row_xh[c] * sum_dxh_xh);
                        }
                    }
                }
            }
            Op::Activation(x, kind) => {
                if needs(x) {
                    let g = slot(grads, nodes, *x);
                    for ((gi, d), xv) in g.iter_mut().zip(dy).zip(val(x).data()) {
                        *gi += d * kind.derivative(*xv);
                    }
                }
            }
            Op::MaskedFill { x, mask } => {
                if needs(x) {
                    let g = slot(grads, nodes, *x);
                    for ((gi, d), m) in g.iter_mut().zip(dy).zip(mask) {
                        if !m {
                            *gi += d;
                        }
                    }
                }
            }
            Op::Softmax { x, axis } => {
                if needs(x) {
                    let y = nodes[i].value.data();
                    let (outer, len, inner) = kernels::axis_extents(nodes[i].value.shape(), *axis);
                    kernels::softmax_backward(y, dy, slot(grads, nodes, *x), outer, len, inner);
                }
            }
            Op::Sum(x) => {
                if needs(x) {
                    let d = dy[0];
                    for gi in slot(grads, nodes, *x).iter_mut() {
                        *gi += d;
                    }
                }
            }
            Op::LabelSmoothedCe { logits, targets, epsilon, pad_id, probs, supervised } => {
                if needs(logits) {
                    let vocab = val(logits).cols();
                    let w = dy[0] / *supervised as f64;
                    let uniform = epsilon / vocab as f64;
                    let g = slot(grads, nodes, *logits);
                    for (r, &t) in targets.iter().enumerate() {
                        if t == *pad_id {
                            continue;
                        }
                        let row = &mut g[r * vocab..(r + 1) * vocab];
                        for (c, gi) in row.iter_mut().enumerate() {
                            let q = if c == t { 1.0 - epsilon + uniform } else { uniform };
                            *gi += w * (probs[r * vocab + c] - q);
                        }
                    }
                }
            }
        }
    }
}

impl Ops for Graph {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn parameter(&mut self, t: Tensor) -> Var {
        self.param(t)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        &self.nodes[v.0].value
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var, NumericsError> {
        let out = forward::matmul(self.value(a), self.value(b))?;
        Ok(self.record(out, Op::MatMul(*a, *b), &[*a, *b]))
    }

    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Result<Var, NumericsError> {
        let out = forward::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.record(out, Op::MatMulNt(*a, *b), &[*a, *b]))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var, NumericsError> {
        let out = forward::add(self.value(a), self.value(b))?;
        Ok(self.record(out, Op::Add(*a, *b), &[*a, *b]))
    }

    fn add_row(&mut self, a: &Var, row: &Var) -> Result<Var, NumericsError> {
        let out = forward::add_row(self.value(a), self.value(row))?;
        Ok(self.record(out, Op::AddRow(*a, *row), &[*a, *row]))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var, NumericsError> {
        let out = forward::mul(self.value(a), self.value(b))?;
        Ok(self.record(out, Op::Mul(*a, *b), &[*a, *b]))
    }

    fn scale(&mut self, a: &Var, factor: f64) -> Var {
        let out = forward::scale(self.value(a), factor);
        self.record(out, Op::Scale(*a, factor), &[*a])
    }

    fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &self.nodes[p.0].value).collect();
        let out = forward::concat(&refs, axis)?;
        Ok(self.record(out, Op::Concat { parts: parts.to_vec(), axis }, parts))
    }

    fn slice(&mut self, a: &Var, axis: usize, start: usize, end: usize) -> Result<Var, NumericsError> {
        let out = forward::slice(self.value(a), axis, start, end)?;
        Ok(self.record(out, Op::Slice { input: *a, axis, start, end }, &[*a]))
    }

    fn transpose(&mut self, a: &Var) -> Result<Var, NumericsError> {
        let out = forward::transpose(self.value(a))?;
        Ok(self.record(out, Op::Transpose(*a), &[*a]))
    }

    fn reshape(&mut self, a: &Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let out = forward::reshape(self.value(a), shape)?;
        Ok(self.record(out, Op::Reshape(*a), &[*a]))
    }

    fn embedding(&mut self, table: &Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let out = forward::embedding(self.value(table), ids)?;
        Ok(self.record(out, Op::Embedding { table: *table, ids: ids.to_vec() }, &[*table]))
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var) -> Result<Var, NumericsError> {
        let out = forward::layer_norm(self.value(x), self.value(gamma), self.value(beta))?;
        let op = Op::LayerNorm {
            x: *x,
            gamma: *gamma,
            beta: *beta,
            xhat: out.xhat,
            inv_std: out.inv_std,
        };
        Ok(self.record(out.output, op, &[*x, *gamma, *beta]))
    }

    fn activation(&mut self, x: &Var, kind: Activation) -> Var {
        let out = forward::activation(self.value(x), kind);
        self.record(out, Op::Activation(*x, kind), &[*x])
    }

    fn masked_fill(&mut self, x: &Var, mask: &[bool], value: f64) -> Result<Var, NumericsError> {
        let out = forward::masked_fill(self.value(x), mask, value)?;
        Ok(self.record(out, Op::MaskedFill { x: *x, mask: mask.to_vec() }, &[*x]))
    }

    fn softmax(&mut self, x: &Var, axis: usize) -> Result<Var, NumericsError> {
        let out = forward::softmax(self.value(x), axis)?;
        Ok(self.record(out, Op::Softmax { x: *x, axis }, &[*x]))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let out = forward::sum(self.value(x));
        self.record(out, Op::Sum(*x), &[*x])
    }

    fn label_smoothed_ce(&mut self, logits: &Var, targets: &[usize], epsilon: f64, pad_id: usize) -> Result<Var, NumericsError> {
        let out = forward::label_smoothed_ce(self.value(logits), targets, epsilon, pad_id)?;
        let op = Op::LabelSmoothedCe {
            logits: *logits,
            targets: targets.to_vec(),
            epsilon,
            pad_id,
            probs: out.probs,
            supervised: out.supervised,
        };
        Ok(self.record(Tensor::scalar(out.loss), op, &[*logits]))
    }
}
