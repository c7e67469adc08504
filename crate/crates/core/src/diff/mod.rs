//! Reverse-mode differentiation over rank-2 `f64` tensors.
//!
//! A [`Tape`] records primitives as they are evaluated; [`Tape::backward`]
//! walks them in reverse. [`grad_check`] compares the analytic gradient with
//! central finite differences.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{central_differences, grad_check, GradCheck};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    /// A primitive produced NaN or ±∞.
    #[error("non-finite value produced by `{op}`")]
    Poisoned { op: &'static str },
}

/// Sinusoidal encoding of every entry of `x` without recording; same layout
/// as [`Tape::positional_encoding`].
pub fn positional_encoding_tensor(x: &Tensor, depth: usize, include_input: bool) -> Tensor {
    tape::positional_encoding(x, depth, include_input)
}
