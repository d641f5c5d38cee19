use thiserror::Error;

/// Errors raised by the numerical kernels, distances, and training loop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method failed to reach its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// A symmetric matrix expected to be positive semi-definite has a
    /// significantly negative eigenvalue.
    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} < -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    /// Newton-Schulz produced a non-finite iterate.
    #[error("Newton-Schulz iteration diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// Eigenvalue pairs whose sum vanishes make the Sylvester operator singular.
    #[error("singular Sylvester operator: eigenvalue pairs {pairs:?} sum to <= {tolerance:e}")]
    SingularPair {
        pairs: Vec<(usize, usize)>,
        tolerance: f64,
    },

    /// A dense linear system is numerically singular.
    #[error("singular linear system at pivot {0}")]
    Singular(usize),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("empty input")]
    Empty,

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A training step hit a numerical failure. The spectra are the
    /// eigenvalues of the real and generated feature covariances at that step,
    /// when they could be computed.
    #[error("training aborted at step {step}: {cause}")]
    TrainingAborted {
        step: usize,
        cause: Box<Error>,
        spectrum_real: Vec<f64>,
        spectrum_fake: Vec<f64>,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs' shape or
    /// configuration.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Shape(_) | Error::Config(_) | Error::Empty | Error::InsufficientSamples { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
