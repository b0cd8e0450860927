//! Wasserstein-1 gradient-flow generative training engine.
//!
//! The crate trains a generator by regressing it onto forward-Euler targets of
//! a Wasserstein-1 gradient flow (with configurable persistency), provides the
//! classic adversarial baselines it generalizes, a generator-free particle
//! mode, and exact discrete optimal-transport oracles used to verify the
//! engine's mathematical contracts.
//!
//! Everything numeric is generic over the [`scalar::Scalar`] type; the
//! concrete aliases at the crate root fix `f64`, which the shipped tools and
//! verification suites use throughout.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod metrics;
pub mod nn;
pub mod ot;
pub mod potential;
pub mod error;
pub mod flow;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar precision used by the shipped binaries and test suites.
pub type Real = f64;
/// Dense matrix at the default precision.
pub type Tensor64 = tensor::Tensor<Real>;
/// Computation graph at the default precision.
pub type Graph64 = autodiff::Graph<Real>;
