use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op}: expected a scalar (1x1) value, got {shape:?}")]
    NonScalar {
        op: &'static str,
        shape: (usize, usize),
    },

    #[error("invalid measure: {reason}")]
    Measure { reason: String },

    #[error(
        "transport problem of {n}x{m} support pairs exceeds the cap of {cap}; \
         solve on minibatches instead"
    )]
    SizeCap { n: usize, m: usize, cap: usize },

    #[error(
        "potential violates the 1-Lipschitz bound between support points {i} and {j}: \
         |phi[{i}] - phi[{j}]| = {delta_phi} > {distance} + 1e-9"
    )]
    LipschitzViolation {
        i: usize,
        j: usize,
        delta_phi: f64,
        distance: f64,
    },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("checkpoint: {reason}")]
    Checkpoint { reason: String },

    #[error("config: {reason}")]
    Config { reason: String },

    #[error("invalid argument: {reason}")]
    Invalid { reason: String },

    #[error("solver failed to converge: {reason}")]
    SolverStalled { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Error::Invalid {
            reason: reason.into(),
        }
    }

    pub fn measure(reason: impl Into<String>) -> Self {
        Error::Measure {
            reason: reason.into(),
        }
    }

    pub fn config(reason: impl Into<String>) -> Self {
        Error::Config {
            reason: reason.into(),
        }
    }

    pub fn checkpoint(reason: impl Into<String>) -> Self {
        Error::Checkpoint {
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
