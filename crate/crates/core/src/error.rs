//! Error types shared across the crate.
//!
//! Programmer contract violations (shape mismatches, non-scalar backward
//! roots) panic with the offending op named in the message; recoverable
//! data/environment conditions surface as [`Error`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside a function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite value produced or detected, tagged with the operation.
    #[error("numeric error in `{op}`: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// Cholesky failed even after jitter escalation.
    #[error("singular kernel: Cholesky failed after {attempts} jitter escalations")]
    SingularKernel { attempts: usize },

    /// Hard vicinity around a target label contained no samples.
    #[error("empty vicinity around target label {target}")]
    VicinityEmpty { target: f64 },

    /// Training aborted on a non-finite loss; diagnostics were dumped.
    #[error("training aborted at step {step}: {detail}")]
    TrainAbort { step: u64, detail: String },

    /// Malformed configuration file or value.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint missing, malformed, or incompatible with the run config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
