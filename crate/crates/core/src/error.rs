use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("trim proportion must lie in [0, 0.5), got {0}")]
    InvalidGamma(f64),

    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    /// Fewer than two observations survive trimming.
    #[error("degenerate trim: n = {n}, g = {g} leaves h = {h} observations")]
    DegenerateTrim { n: usize, g: usize, h: usize },

    /// Both groups have a zero variance estimate, so no inference is possible.
    #[error("zero variance in both groups; no inference possible")]
    ZeroVariance,

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "relative change denominator {estimate} is within 3 standard errors ({std_error}) of zero"
    )]
    UnstableDenominator { estimate: f64, std_error: f64 },

    #[error("no covariate is observed in either group")]
    AllMissing,

    #[error("covariate has missing values; impute before adjusting")]
    MissingCovariates,

    #[error("covariate trimmed means have zero variance in both groups")]
    ZeroCovariateVariance,

    #[error("infeasible moments: {0}")]
    InfeasibleMoments(String),

    #[error("numerical integration failed: {0}")]
    IntegrationFailure(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
