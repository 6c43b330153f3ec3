use alloc::string::String;

/// Errors raised by the numerical kernels.
///
/// Messages are stable strings: the lab harness prints them verbatim in
/// diagnostics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mollifier under-resolved: eps {eps} below grid spacing {spacing}")]
    UnderResolved { eps: f64, spacing: f64 },
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("too few scales for a regression: {got} < {needed}")]
    TooFewScales { got: usize, needed: usize },
    #[error("grid has no node at time zero")]
    NoNodeAtZero,
    #[error("truncation too small: back horizon {back} < 10 x horizon {horizon}")]
    TruncationTooSmall { back: f64, horizon: f64 },
    #[error("covariance factorization failed: {0}")]
    Factorization(String),
    #[error("nonzero initial value {0}")]
    NonzeroInitialValue(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("localisation violated: {0}")]
    Localisation(String),
    #[error("germ not coherent: refinement ratio {ratio}")]
    GermNotCoherent { ratio: f64 },
    #[error("Young condition violated: {0}")]
    YoungCondition(String),
    #[error("no Young solution detected: {0}")]
    NoYoungSolution(String),
    #[error("flow inversion failed: mismatch {mismatch} exceeds {limit}")]
    FlowInversion { mismatch: f64, limit: f64 },
    #[error("linear Young equation diverged")]
    LinearYdeDivergence,
    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
