//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The graph supports gradients with respect to parameters and inputs, and —
//! via symbolic adjoint emission — differentiation *through* an input-gradient
//! computation, which is what gradient/Lipschitz penalties need.

mod finite_diff;
mod graph;

pub use finite_diff::{central_gradient, max_relative_error, relative_error, DEFAULT_STEP};
pub use graph::{GradientMap, Graph, LeafKind, NodeId, Op};
