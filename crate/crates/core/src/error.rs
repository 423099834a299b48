use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative or non-finite rate at index {index}")]
    InvalidRate { index: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state {state} out of range (model has {n_states} states)")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("time must be non-negative and finite, got {0}")]
    InvalidTime(f64),

    #[error("observation times must be strictly increasing ({prev} then {next})")]
    NonIncreasingTime { prev: f64, next: f64 },

    #[error("M/M/1 transition requires 0 <= lambda < mu (lambda={lambda}, mu={mu})")]
    NotStationary { lambda: f64, mu: f64 },

    #[error("series did not converge within {0} terms")]
    SeriesNonConvergence(usize),

    #[error("quadrature did not reach requested tolerance")]
    QuadratureNonConvergence,

    #[error("non-finite transition probability")]
    NonFinite,

    #[error("observation has zero likelihood everywhere on the support")]
    LikelihoodVanished,

    #[error("prior mass on the grid too small ({retained:e} of {total:e})")]
    PriorMassTooSmall { retained: f64, total: f64 },

    #[error("every outcome branch has vanishing probability")]
    AllBranchesVanished,

    #[error("observation source failed: {0}")]
    Observer(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
