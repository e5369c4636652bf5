//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, FlowError>;

#[derive(Debug, Error)]
pub enum FlowError {
    /// Operand shapes are incompatible (elementwise mismatch, matmul inner
    /// dimension, latent/event dimension disagreement).
    #[error("shape error: {0}")]
    Shape(String),

    /// An API precondition was violated (non-scalar loss, uninitialized
    /// ActNorm, negative temperature, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Data is degenerate for the requested operation (zero-variance column,
    /// too-small batch for data-dependent init).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A scale parameter collapsed to zero, making the transform singular.
    #[error("singular transform: {0}")]
    Singular(String),

    /// Invalid configuration (empty coupling partition, bad tap pair,
    /// autoregressive mask violation, unresolvable λ weights).
    #[error("config error: {0}")]
    Config(String),

    /// A cell of an input file failed to parse; positions are 1-based.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// Input data violates a documented requirement (too few rows,
    /// out-of-range quantized value).
    #[error("data error: {0}")]
    Data(String),

    /// A generated value became non-finite; callers may skip the offending
    /// term and continue.
    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    /// The training loss stayed non-finite for too many consecutive steps.
    #[error("divergence at step {step}: loss non-finite for {consecutive} consecutive steps ({diagnostics})")]
    Divergence {
        step: usize,
        consecutive: usize,
        diagnostics: String,
    },

    /// The latent interpolant has zero norm and cannot be rescaled.
    #[error("degenerate interpolant: {0}")]
    DegenerateInterpolant(String),

    /// A checkpoint file is missing, malformed, or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
