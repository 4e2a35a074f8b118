//! Dense and CSR matrices, the kernels the GNN layers use, and a small
//! reverse-mode tape over those kernels.

pub mod alloc;
mod csr;
mod dense;
pub mod kernels;
mod tape;

pub use csr::CsrMat;
pub use dense::DenseMat;
pub use tape::{GradTape, Gradients, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("buffer length {got} does not match shape (expected {expected})")]
    BadLength { expected: usize, got: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("expected a 1x1 scalar, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("invalid CSR matrix: {0}")]
    InvalidCsr(String),
    #[error("{0}")]
    InvalidArgument(String),
}
