//! Forward definitions of every differentiable operation.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{NumericsError, Tensor};

/// Pointwise nonlinearity used in feed-forward blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => kernels::gelu(x),
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => kernels::gelu_grad(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            op: "elementwise",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_axis(t: &Tensor, axis: usize) -> Result<(), NumericsError> {
    if axis >= t.rank() {
        return Err(NumericsError::InvalidAxis {
            axis,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, k) = a.expect_matrix()?;
    let (k2, n) = b.expect_matrix()?;
    if k != k2 {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))
}

/// `a · bᵀ`, the form used by attention scores and tied output projections.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, k) = a.expect_matrix()?;
    let (n, k2) = b.expect_matrix()?;
    if k != k2 {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], kernels::matmul_nt(a.data(), b.data(), m, k, n))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Adds a vector to every row (broadcast over the last axis).
pub fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor, NumericsError> {
    let c = a.cols();
    if row.numel() != c {
        return Err(NumericsError::ShapeMismatch {
            op: "add_row",
            left: a.shape().to_vec(),
            right: row.shape().to_vec(),
        });
    }
    let r = row.data();
    let mut data = a.data().to_vec();
    for chunk in data.chunks_exact_mut(c) {
        for (x, b) in chunk.iter_mut().zip(r) {
            *x += b;
        }
    }
    Tensor::new(a.shape().to_vec(), data)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn scale(a: &Tensor, factor: f64) -> Tensor {
    let data = a.data().iter().map(|x| x * factor).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor, NumericsError> {
    let first = parts.first().ok_or(NumericsError::EmptyConcat)?;
    check_axis(first, axis)?;
    let mut shape = first.shape().to_vec();
    let mut total = 0;
    for p in parts {
        let compatible = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                left: first.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
        total += p.shape()[axis];
    }
    shape[axis] = total;
    let (outer, _, inner) = kernels::axis_extents(&shape, axis);
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let block = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * block..(o + 1) * block]);
        }
    }
    Tensor::new(shape, data)
}

pub fn slice(a: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor, NumericsError> {
    check_axis(a, axis)?;
    let len = a.shape()[axis];
    if start >= end || end > len {
        return Err(NumericsError::InvalidSlice {
            start,
            end,
            len,
        });
    }
    let (outer, _, inner) = kernels::axis_extents(a.shape(), axis);
    let mut shape = a.shape().to_vec();
    shape[axis] = end - start;
    let mut data = Vec::with_capacity(outer * (end - start) * inner);
    for o in 0..outer {
        let base = o * len * inner;
        data.extend_from_slice(&a.data()[base + start * inner..base + end * inner]);
    }
    Tensor::new(shape, data)
}

pub fn transpose(a: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, n) = a.expect_matrix()?;
    let src = a.data();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = src[i * n + j];
        }
    }
    Tensor::new(vec![n, m], data)
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor, NumericsError> {
    let numel: usize = shape.iter().product();
    if numel != a.numel() {
        return Err(NumericsError::ShapeMismatch {
            op: "reshape",
            left: a.shape().to_vec(),
            right: shape.to_vec(),
        });
    }
    Tensor::new(shape.to_vec(), a.data().to_vec())
}

pub fn embedding(table: &Tensor, ids: &[usize]) -> Result<Tensor, NumericsError> {
    let (vocab, d) = table.expect_matrix()?;
    if ids.is_empty() {
        return Err(NumericsError::InvalidShape { shape: vec![0, d] });
    }
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= vocab {
            return Err(NumericsError::IndexOutOfRange { index: id, bound: vocab });
        }
        data.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), d], data)
}

pub struct LayerNormOut {
    pub output: Tensor,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<LayerNormOut, NumericsError> {
    let d = x.cols();
    if gamma.numel() != d || beta.numel() != d {
        return Err(NumericsError::ShapeMismatch {
            op: "layer_norm",
            left: x.shape().to_vec(),
            right: gamma.shape().to_vec(),
        });
    }
    let rows = x.numel() / d;
    let (out, xhat, inv_std) = kernels::layer_norm(x.data(), gamma.data(), beta.data(), rows, d);
    Ok(LayerNormOut {
        output: Tensor::new(x.shape().to_vec(), out)?,
        xhat,
        inv_std,
    })
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Replaces entries where `mask` is true with `value`.
pub fn masked_fill(x: &Tensor, mask: &[bool], value: f64) -> Result<Tensor, NumericsError> {
    if mask.len() != x.numel() {
        return Err(NumericsError::MaskLength {
            mask: mask.len(),
            numel: x.numel(),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { value } else { v })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor, NumericsError> {
    check_axis(x, axis)?;
    let (outer, len, inner) = kernels::axis_extents(x.shape(), axis);
    Tensor::new(x.shape().to_vec(), kernels::softmax(x.data(), outer, len, inner))
}

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

pub struct CrossEntropyOut {
    pub loss: f64,
    /// Row-wise softmax of the logits, kept for the backward pass.
    pub probs: Vec<f64>,
    pub supervised: usize,
}

/// Label-smoothed cross entropy averaged over positions whose target is not
/// `pad_id`. The smoothing mass `epsilon` is spread uniformly over the whole
/// vocabulary, target class included.
pub fn label_smoothed_ce(
    logits: &Tensor,
    targets: &[usize],
    epsilon: f64,
    pad_id: usize,
) -> Result<CrossEntropyOut, NumericsError> {
    let (rows, vocab) = logits.expect_matrix()?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(NumericsError::InvalidSmoothing(epsilon));
    }
    if targets.len() != rows {
        return Err(NumericsError::ShapeMismatch {
            op: "label_smoothed_ce",
            left: logits.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    let mut probs = vec![0.0; rows * vocab];
    let mut total = 0.0;
    let mut supervised = 0;
    for (r, &t) in targets.iter().enumerate() {
        if t == pad_id {
            continue;
        }
        if t >= vocab {
            return Err(NumericsError::IndexOutOfRange { index: t, bound: vocab });
        }
        let logp = kernels::log_softmax_row(logits.row(r));
        let nll = -logp[t];
        let mean_nll = -logp.iter().sum::<f64>() / vocab as f64;
        total += (1.0 - epsilon) * nll + epsilon * mean_nll;
        for (p, lp) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(&logp) {
            *p = libm::exp(*lp);
        }
        supervised += 1;
    }
    if supervised == 0 {
        return Err(NumericsError::NoSupervisedPositions);
    }
    Ok(CrossEntropyOut {
        loss: total / supervised as f64,
        probs,
        supervised,
    })
}
