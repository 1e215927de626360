//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! The op set is exactly what the landmark network needs: linear algebra,
//! activations, layer norm, (grouped) softmax, row gathers, segment
//! reductions and a masked cross-entropy.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, GradCheckOutcome};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

/// Names of every differentiable op the tape records.
pub const OP_CATALOG: &[&str] = &[
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "gelu",
    "layer_norm",
    "softmax",
    "grouped_softmax",
    "gather_rows",
    "segment_sum",
    "segment_mean",
    "segment_max",
    "concat",
    "add_bias",
    "cross_entropy",
    "transpose",
    "slice_cols",
    "sum",
];

#[cfg(test)]
mod tests;
