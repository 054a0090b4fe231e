use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("{function} did not converge after {iterations} iterations ({detail})")]
    NonConvergence {
        function: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("ill-conditioned dictionary: {0}")]
    IllConditioned(String),

    #[error("Hessian is not positive definite at the mode (min pivot {min_pivot:e})")]
    NonInvertibleHessian { min_pivot: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite gradient at iteration {iteration}; lambda = {lambda:?}")]
    NonFiniteGradient { iteration: usize, lambda: Vec<f64> },

    #[error("radial grid captures only {captured:.3e} of the target mass (need {required:.3e})")]
    Coverage { captured: f64, required: f64 },

    #[error("exact assignment supports at most {cap} points, got {n}; split into batches")]
    Size { n: usize, cap: usize },

    #[error("all importance weights underflowed")]
    DegenerateWeights,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        function,
        detail: detail.into(),
    }
}
