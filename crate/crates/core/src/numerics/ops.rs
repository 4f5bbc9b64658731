use alloc::rc::Rc;
use alloc::vec::Vec;

use super::forward::{self, Activation};
use super::{NumericsError, Tensor};

/// The operation vocabulary model code is written against.
///
/// [`Graph`](super::Graph) records every call for reverse-mode
/// differentiation; [`Eager`] just computes values. Both run the same
/// forward kernels, so a model evaluated through either produces
/// bit-identical outputs.
pub trait Ops {
    type Value: Clone;

    /// Wraps a tensor that takes no part in differentiation.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    /// Wraps a tensor that gradients should flow to. Without a tape this
    /// is the same as [`Ops::constant`].
    fn parameter(&mut self, t: Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn matmul_nt(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn add_row(&mut self, a: &Self::Value, row: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn scale(&mut self, a: &Self::Value, factor: f64) -> Self::Value;
    fn concat(&mut self, parts: &[Self::Value], axis: usize) -> Result<Self::Value, NumericsError>;
    fn slice(
        &mut self,
        a: &Self::Value,
        axis: usize,
        start: usize,
        end: usize,
    ) -> Result<Self::Value, NumericsError>;
    fn transpose(&mut self, a: &Self::Value) -> Result<Self::Value, NumericsError>;
    fn reshape(&mut self, a: &Self::Value, shape: &[usize]) -> Result<Self::Value, NumericsError>;
    fn embedding(&mut self, table: &Self::Value, ids: &[usize]) -> Result<Self::Value, NumericsError>;
    fn layer_norm(
        &mut self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
    ) -> Result<Self::Value, NumericsError>;
    fn activation(&mut self, x: &Self::Value, kind: Activation) -> Self::Value;
    fn masked_fill(&mut self, x: &Self::Value, mask: &[bool], value: f64) -> Result<Self::Value, NumericsError>;
    fn softmax(&mut self, x: &Self::Value, axis: usize) -> Result<Self::Value, NumericsError>;
    fn sum(&mut self, x: &Self::Value) -> Self::Value;
    fn label_smoothed_ce(
        &mut self,
        logits: &Self::Value,
        targets: &[usize],
        epsilon: f64,
        pad_id: usize,
    ) -> Result<Self::Value, NumericsError>;
}

/// Tape-free evaluation: values only, no gradient bookkeeping.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl Ops for Eager {
    type Value = Rc<Tensor>;

    fn constant(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn parameter(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }

    fn matmul(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::matmul(a, b).map(Rc::new)
    }

    fn matmul_nt(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::matmul_nt(a, b).map(Rc::new)
    }

    fn add(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::add(a, b).map(Rc::new)
    }

    fn add_row(&mut self, a: &Rc<Tensor>, row: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::add_row(a, row).map(Rc::new)
    }

    fn mul(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::mul(a, b).map(Rc::new)
    }

    fn scale(&mut self, a: &Rc<Tensor>, factor: f64) -> Rc<Tensor> {
        Rc::new(forward::scale(a, factor))
    }

    fn concat(&mut self, parts: &[Rc<Tensor>], axis: usize) -> Result<Rc<Tensor>, NumericsError> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        forward::concat(&refs, axis).map(Rc::new)
    }

    fn slice(&mut self, a: &Rc<Tensor>, axis: usize, start: usize, end: usize) -> Result<Rc<Tensor>, NumericsError> {
        forward::slice(a, axis, start, end).map(Rc::new)
    }

    fn transpose(&mut self, a: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::transpose(a).map(Rc::new)
    }

    fn reshape(&mut self, a: &Rc<Tensor>, shape: &[usize]) -> Result<Rc<Tensor>, NumericsError> {
        forward::reshape(a, shape).map(Rc::new)
    }

    fn embedding(&mut self, table: &Rc<Tensor>, ids: &[usize]) -> Result<Rc<Tensor>, NumericsError> {
        forward::embedding(table, ids).map(Rc::new)
    }

    fn layer_norm(&mut self, x: &Rc<Tensor>, gamma: &Rc<Tensor>, beta: &Rc<Tensor>) -> Result<Rc<Tensor>, NumericsError> {
        forward::layer_norm(x, gamma, beta).map(|o| Rc::new(o.output))
    }

    fn activation(&mut self, x: &Rc<Tensor>, kind: Activation) -> Rc<Tensor> {
        Rc::new(forward::activation(x, kind))
    }

    fn masked_fill(&mut self, x: &Rc<Tensor>, mask: &[bool], value: f64) -> Result<Rc<Tensor>, NumericsError> {
        forward::masked_fill(x, mask, value).map(Rc::new)
    }

    fn softmax(&mut self, x: &Rc<Tensor>, axis: usize) -> Result<Rc<Tensor>, NumericsError> {
        forward::softmax(x, axis).map(Rc::new)
    }

    fn sum(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(forward::sum(x))
    }

    fn label_smoothed_ce(
        &mut self,
        logits: &Rc<Tensor>,
        targets: &[usize],
        epsilon: f64,
        pad_id: usize,
    ) -> Result<Rc<Tensor>, NumericsError> {
        forward::label_smoothed_ce(logits, targets, epsilon, pad_id).map(|o| Rc::new(Tensor::scalar(o.loss)))
    }
}
