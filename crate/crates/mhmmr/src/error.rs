//! Error type shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum MhmmrError {
    /// Timestamps must be strictly increasing; holds the index of the first
    /// sample that fails to increase.
    #[error("timestamps are not strictly increasing at index {0}")]
    NonMonotonicTime(usize),

    /// A NaN or infinity in the value matrix.
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    /// Ground-truth labels, when present, must cover every sample.
    #[error("label sequence has length {labels} but the series has {n} samples")]
    LabelLengthMismatch { labels: usize, n: usize },

    /// Shape disagreement between two inputs.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Weight vector with non-positive sum.
    #[error("degenerate weights: the weight sum must be positive")]
    DegenerateWeights,

    /// The normal equations could not be solved even after ridge stabilization.
    #[error("singular system: normal equations failed to solve after ridge stabilization")]
    SingularSystem,

    /// A state covariance failed to factorize; signals a corrupted model.
    #[error("covariance matrix of state {0} is not positive definite")]
    CovarianceNotPD(usize),

    /// A whole forward column vanished; cannot happen with finite emissions
    /// and valid chain parameters.
    #[error("numerical underflow in the forward recursion at step {0}")]
    NumericalUnderflow(usize),

    /// Fewer samples than the estimator requires.
    #[error("too few samples: got {n}, need at least {min}")]
    TooFewSamples { n: usize, min: usize },

    /// Evaluation requested on a series without ground-truth labels.
    #[error("series carries no ground-truth labels")]
    MissingLabels,

    /// Two sequences that must align do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Channel selection named a channel or sensor group that does not exist.
    #[error("unknown channel or sensor group `{0}`")]
    UnknownChannel(String),

    /// A generator spec that fails validation.
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    /// A fit configuration that fails validation.
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),

    /// CSV input without the required `t` column.
    #[error("missing required time column `t`")]
    MissingTimeColumn,

    /// Unparseable CSV cell; indices are zero-based over data rows/columns.
    #[error("cannot parse field at data row {row}, column {col}")]
    ParseError { row: usize, col: usize },

    /// Model file with an unknown or incomplete format.
    #[error("model file format mismatch: {0}")]
    FormatVersionMismatch(String),

    /// A constructed or loaded object violates a type invariant.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MhmmrError>;
