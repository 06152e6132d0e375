//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Every learnable layer of the detector is expressed as a sequence of
//! [`Tape`] operations. Parameters enter a tape as gradient-tracked leaves;
//! after [`Tape::backward`] their gradients are read back with [`Tape::grad`].

mod optim;
mod tape;
mod tensor;

use alloc::vec::Vec;

pub use optim::Adam;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss is not connected to any gradient-tracked tensor")]
    Detached,
    #[error("backward already ran on this tape")]
    BackwardTwice,
}

impl Tape {
    /// Affine map `x W + b` applied row-wise.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }
}
