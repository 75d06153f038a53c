use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scheme balance: {0}")]
    SchemeBalance(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no failures observed before the truncation time")]
    NoFailures,
    #[error("insufficient failures: need at least {needed}, got {got}")]
    InsufficientFailures { needed: usize, got: usize },
    #[error("{method}: no convergence after {iterations} iterations")]
    NoConvergence { method: &'static str, iterations: usize },
    #[error("{method}: divergent iterate ({detail})")]
    Divergent { method: &'static str, detail: String },
    #[error("information singular: {0}")]
    SingularInformation(String),
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("hessian not negative definite at {0}")]
    HessianNotNegativeDefinite(String),
    #[error("maximizer on boundary: {0}")]
    MaximizerOnBoundary(String),
    #[error("E-step degenerate: {0}")]
    DegenerateEStep(String),
    #[error("empty chain")]
    EmptyChain,
    #[error("insufficient draws: need at least {needed}, got {got}")]
    InsufficientDraws { needed: usize, got: usize },
    #[error("degenerate elicitation: {0}")]
    DegenerateElicitation(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Domain(_)
                | Error::SchemeBalance(_)
                | Error::Parse(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::InsufficientFailures { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
