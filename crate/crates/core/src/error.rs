//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied parameter is outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A point fell outside the chart ball it was lifted through.
    #[error("point outside chart: distance {dist:.6e} exceeds radius {radius:.6e}")]
    OutOfChart { dist: f64, radius: f64 },

    /// Subspaces intersect nontrivially where a direct sum was required.
    #[error("degenerate subspace pair: cos(min principal angle) = {cosine:.12}")]
    DegenerateSubspaces { cosine: f64 },

    /// Dimension mismatch between objects that must live on the same torus.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Newton or fixed-point iteration failed to reach its tolerance.
    #[error("iteration failed to converge: {context} (residual {residual:.3e})")]
    NonConvergence { context: String, residual: f64 },

    /// A requested inverse does not exist or could not be evaluated.
    #[error("map not invertible: {0}")]
    NotInvertible(String),

    /// Perturbation supports that must be pairwise disjoint overlap.
    #[error("support overlap: perturbations {a} and {b} (gap {gap:.3e})")]
    SupportOverlap { a: usize, b: usize, gap: f64 },

    /// A construction ran into its configured size cap.
    #[error("size cap exceeded: {0}")]
    Capacity(String),

    /// Image hulls grew past the chart scale; the answer would be vacuous.
    #[error("indeterminate: {0}")]
    Indeterminate(String),

    /// Internal invariant violated; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CoreError {
    pub fn parameter(msg: impl Into<String>) -> Self {
        CoreError::Parameter(msg.into())
    }
}
