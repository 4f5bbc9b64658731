//! Dense `f64` tensors, reverse-mode automatic differentiation, the
//! label-smoothed cross-entropy loss and the Adam optimizer.

mod adam;
mod forward;
mod graph;
pub mod gradcheck;
pub mod kernels;
mod ops;
mod tensor;

use alloc::vec::Vec;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use forward::Activation;
pub use graph::{Graph, Var};
pub use ops::{Eager, Ops};
pub use tensor::Tensor;

/// Default label-smoothing mass.
pub const DEFAULT_LABEL_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid shape {shape:?}: dimensions must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected a matrix, got shape {shape:?}")]
    NotMatrix { shape: Vec<usize> },
    #[error("axis {axis} out of range for shape {shape:?}")]
    InvalidAxis { axis: usize, shape: Vec<usize> },
    #[error("slice {start}..{end} invalid for axis of length {len}")]
    InvalidSlice { start: usize, end: usize, len: usize },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("mask has {mask} entries but tensor has {numel}")]
    MaskLength { mask: usize, numel: usize },
    #[error("concat needs at least one input")]
    EmptyConcat,
    #[error("label smoothing must lie in [0, 1), got {0}")]
    InvalidSmoothing(f64),
    #[error("no supervised positions")]
    NoSupervisedPositions,
    #[error("backward already ran on this graph; call zero_grad first")]
    BackwardTwice,
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
    #[error("{params} parameters, {grads} gradients, {state} optimizer slots")]
    ParameterCount { params: usize, grads: usize, state: usize },
    #[error("gradient {index} has {found} values, parameter has {expected}")]
    GradientShape {
        index: usize,
        expected: usize,
        found: usize,
    },
}
