use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("empty set has no distance")]
    EmptySetDistance,
    #[error("magnetization undefined on empty set")]
    EmptyMagnetization,
    #[error("no positive decay rate")]
    NoDecayRate,
    #[error("conditioning inconsistent")]
    ConditioningInconsistent,
    #[error("γ^± defined for the symmetric model")]
    PlusMinusNeedsSymmetric,
    #[error("increase N_max (Poisson tail bound {tail:e} exceeds tolerance {tolerance:e})")]
    IncreaseNMax { tail: f64, tolerance: f64 },
    #[error("rejection sampler exhausted {attempts} attempts (acceptance rate {acceptance_rate:e}); use MCMC")]
    RejectionExhausted { attempts: u64, acceptance_rate: f64 },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("channel not spanning: {0}")]
    ChannelNotSpanning(String),
    #[error("rendering supports d ≤ 2")]
    RenderDimension,
    #[error("cluster-count bound violated: {found} clusters meet the window, bound {bound}")]
    ClusterBound { found: usize, bound: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
