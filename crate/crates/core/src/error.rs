use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probability {0} is outside (0, 1)")]
    ProbabilityDomain(f64),

    #[error("{0} has an infinite mean")]
    InfiniteMean(String),

    #[error("{0} has infinite variance")]
    InfiniteVariance(String),

    #[error("insufficient sample: need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("degenerate GPD fit: b0 - 2*b1 = {0:e}")]
    DegenerateFit(f64),

    #[error("unusable GPD fit: xi_hat = {0} is not below 1")]
    UnusableFit(f64),

    #[error("estimator failed on {failures} of {draws} panel draws (limit 0.1%)")]
    PanelFailures { failures: usize, draws: usize },

    #[error("no sign change of the secured risk up to c = {limit}; the scalar is unbounded")]
    UnboundedScalar { limit: f64 },

    #[error("target exception rate {target} is unreachable: rate {rate} at c = {limit}")]
    UnreachableTarget { target: f64, rate: f64, limit: f64 },

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_probability(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::ProbabilityDomain(p))
    }
}
