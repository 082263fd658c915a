//! Dense-tensor computation core with reverse-mode differentiation.
//!
//! Everything the completion network needs is expressed through [`Graph`]:
//! a forward pass records operations into a tape, [`Graph::backward`] walks
//! the tape in reverse and accumulates gradients. Tensors are row-major,
//! f32 by default; the whole module is generic over [`Scalar`] so gradient
//! oracles can run in f64.

mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{check_gradient, guarded_rel_err, numeric_gradient, GradCheckReport};
pub use graph::{DistanceNorm, Graph, Var};
pub use tensor::Tensor;

use std::fmt::Debug;

/// Floating-point element type for tensors. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssignOps + Debug + Default + Send + Sync + 'static
{
    /// Epsilon added to the variance in layer normalization.
    fn layer_norm_eps() -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn layer_norm_eps() -> Self {
        1e-5
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn layer_norm_eps() -> Self {
        1e-5
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Errors from tensor construction and graph operations.
#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange { axis: usize, shape: Vec<usize> },
    #[error("index {index} out of range for dimension of size {size} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{op} requires a scalar output, got shape {shape:?}")]
    NonScalarOutput { op: &'static str, shape: Vec<usize> },
    #[error("invalid probability {p} for dropout, must satisfy 0 <= p < 1")]
    BadProbability { p: f64 },
    #[error("zero-size dimension not allowed in shape {shape:?}")]
    ZeroDim { shape: Vec<usize> },
}
