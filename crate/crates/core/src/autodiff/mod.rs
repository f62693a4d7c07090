//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every primitive as it is evaluated. Calling
//! [`Graph::backward`] on a scalar node walks the record in reverse and
//! deposits gradients on every node that requires them. Graphs are cheap
//! to build and are rebuilt for every forward pass.
//!
//! ```
//! use pose2traj::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::vector(vec![3.0]).requiring_grad());
//! let sq = g.square(x);
//! let loss = g.mean(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[6.0]);
//! ```

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, numeric_grad};
pub use graph::{Attrs, Graph, Primitive, Var};
pub use tensor::Tensor;

/// Layer-normalization epsilon used throughout the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("{primitive} expects {expected} inputs, got {got}")]
    Arity {
        primitive: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{primitive} needs attribute `{attr}`")]
    MissingAttribute { primitive: &'static str, attr: String },
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss does not depend on any tensor that requires a gradient")]
    DisconnectedGraph,
    #[error("parameter {0} has no gradient")]
    MissingGradient(usize),
}

#[cfg(test)]
mod tests;
