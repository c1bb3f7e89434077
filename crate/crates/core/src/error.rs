//! Error type shared by every module.

use thiserror::Error;

/// Failures surfaced by evaluation, exact algebra and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the domain of the function (non-finite, |p| >= 1, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A denominator came within the pole threshold of zero.
    #[error("pole: {0}")]
    Pole(String),
    /// An infinite product was requested where it does not converge.
    #[error("divergent product: {0}")]
    Divergent(String),
    /// Variable counts or vector lengths disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Exact division left a nonzero remainder.
    #[error("inexact division: {0}")]
    InexactDivision(String),
    /// A formula denominator vanishes at the chosen exact parameters.
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
    /// Two eigenvalues in a triangular solve coincide.
    #[error("eigenvalue collision: {0}")]
    Collision(String),
    /// Malformed or unsupported parameter values.
    #[error("parameter error: {0}")]
    Param(String),
    /// A balancing constraint cannot be met.
    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),
    /// Bad configuration file or flag combination.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
