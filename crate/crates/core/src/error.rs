//! Error type shared by all modules.

use thiserror::Error;

/// Failures raised by constructors and operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed input: index out of range, wrong tensor size, missing table entry.
    #[error("structural error: {0}")]
    Structural(String),
    /// Well-formed input that violates a mathematical axiom.
    #[error("axiom failure: {0}")]
    Axiom(String),
    /// A least-squares solve or decomposition left a residual above tolerance.
    #[error("residual {residual:.3e} above tolerance in {context}")]
    Residual { context: String, residual: f64 },
}

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn axiom(msg: impl Into<String>) -> Self {
        Error::Axiom(msg.into())
    }

    /// True for schema or shape problems, false for mathematical failures.
    pub fn is_structural(&self) -> bool {
        matches!(self, Error::Structural(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
