use thiserror::Error;

/// Errors raised by the likelihood solvers and the pipelines built on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample set")]
    EmptySamples,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("KL undefined: not absolutely continuous")]
    NotAbsolutelyContinuous,

    #[error("negative radius")]
    NegativeRadius,

    #[error("kernel width must be positive")]
    NonPositiveWidth,

    #[error("oracle is test-scale only (N = {0} exceeds 12)")]
    OracleTooLarge(usize),

    #[error("log-likelihood is −∞: observation {0} cannot receive mass with zero radius")]
    LogLikelihoodUnbounded(usize),

    #[error("batch solver produced an infeasible allocation")]
    InfeasibleAllocation,

    #[error("covariance is not positive definite")]
    SingularCovariance,

    #[error("posterior undefined: zero evidence")]
    ZeroEvidence,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("radius formula is undefined for dimension m = 2")]
    DimensionTwo,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot stratify: class {class} has {count} members but {folds} folds were requested")]
    CannotStratify { class: usize, count: usize, folds: usize },

    #[error("no positive labels")]
    NoPositives,

    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
