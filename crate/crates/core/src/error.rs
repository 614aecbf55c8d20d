use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate neighborhood: total kernel mass {mass:e} at the evaluation point")]
    DegenerateNeighborhood { mass: f64 },
    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("conditioning block is singular")]
    SingularConditioning,
    #[error("variance unavailable: {0}")]
    VarianceUnavailable(&'static str),
    #[error("accept-reject envelope failure: acceptance rate {rate:e}")]
    EnvelopeFailure { rate: f64 },
    #[error("no observations inside the integration region")]
    EmptyRegion,
    #[error("{failed} of {total} bootstrap replicates failed")]
    BootstrapFailed { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::EmptyRegion)
    }
}
