//! Error types shared across the toolkit.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by ingestion, fitting, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; carries the 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Sample identifiers in two inputs could not be matched up.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A value outside the operation's numeric domain (negative count,
    /// non-finite feature, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A sample that cannot be normalized (zero library size).
    #[error("degenerate sample {0}: zero library size")]
    DegenerateSample(String),

    /// An operation removed everything it was given.
    #[error("empty result: {0}")]
    EmptyResult(String),

    /// Caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A class required by the operation has no samples.
    #[error("missing class: {0}")]
    MissingClass(String),

    /// Voters or models wired together disagree on shapes or class maps.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric whose value is undefined on the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Requested moments admit no joint distribution.
    #[error("infeasible moment set: {0}")]
    Infeasible(String),

    /// Leaf with zero curvature and zero regularization.
    #[error("degenerate leaf: hessian + lambda is zero")]
    DegenerateLeaf,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
