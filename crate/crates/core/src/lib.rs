//! Multiple kernel learning with block-norm and elastic-net regularization.
//!
//! The library trains classifiers over a family of precomputed Gram matrices
//! by maximizing a smooth box-constrained dual with a projected quasi-Newton
//! method, then recovers the per-kernel mixture weights from the dual
//! solution. A single exponent `p` interpolates between sparse (`p` near 1)
//! and uniform (`p` large) kernel combinations; an optional ridge term `mu`
//! switches the regularizer to an elastic net.
//!
//! The supporting pieces live in their own modules: kernel construction and
//! normalization ([`kernels`]), the dual objective and its gradient
//! ([`objective`]), the solver ([`solver`]), weight recovery ([`weights`]),
//! trained models, prediction and ranking metrics ([`model`]), Rademacher
//! bound evaluation ([`bounds`]), a synthetic benchmark generator with known
//! Bayes error ([`synth`]), and a grid-sweep driver ([`sweep`]).

pub mod bounds;
pub mod kernels;
pub mod model;
pub mod objective;
pub mod solver;
pub mod sweep;
pub mod synth;
pub mod weights;

pub use kernels::{name_kernels, GramMatrix, KernelKind, KernelSet, KernelSpec, SampleSet};
pub use model::{CrossKernelSet, TrainedModel};
pub use objective::{DualPoint, LabeledProblem, Loss, MklConfig};
pub use solver::{SolveResult, SolverConfig};
pub use synth::Scenario;
pub use weights::KernelWeights;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("kernel kind does not match the sample modality: {0}")]
    ModalityMismatch(&'static str),

    #[error("matrix is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },

    #[error("diagonal entry {index} is {value}; normalization needs a positive diagonal")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("all dual block norms are zero; kernel weights are undetermined")]
    AllNormsZero,

    #[error("fixed-point iteration stalled with max residual {residual:e}")]
    NoConvergence { residual: f64 },

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite {
        what: &'static str,
        iteration: usize,
    },

    #[error("scores/labels must contain both classes")]
    SingleClass,

    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse {
        path: String,
        offset: u64,
        msg: String,
    },

    #[error("unsupported model format version: {0}")]
    UnsupportedVersion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(path: &std::path::Path, offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }
}
