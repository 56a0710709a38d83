use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("logarithmic map is undefined at the antipode")]
    AntipodalPoint,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("quadratic form is not positive definite")]
    NotPositiveDefinite,

    #[error("observed decision is interior to the feasible region; no active constraints")]
    InteriorPoint,

    #[error("active-constraint normals sum to zero")]
    ZeroCone,

    #[error("observed decision is not on the feasible-region boundary (residual {0:e})")]
    OffBoundary(f64),

    #[error("sample mean direction vanishes")]
    ZeroResultant,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("chains have zero within-chain variance")]
    DegenerateChains,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
