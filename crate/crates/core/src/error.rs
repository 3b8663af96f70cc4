use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode budget exceeded: {requested} modes requested, budget is {budget}")]
    Capacity { requested: usize, budget: usize },

    #[error("under-resolved grid: {0}")]
    Resolution(String),

    #[error("field and grid (or two fields) live on different spectra")]
    SpectrumMismatch,

    #[error("symbol is not finite on mode {index} (eigenvalue {eigenvalue}): got {value}")]
    Symbol {
        index: usize,
        eigenvalue: f64,
        value: f64,
    },

    #[error("quadratic part is not positive ({quadratic}); direction is not coercive")]
    NonCoercive { quadratic: f64 },

    #[error("field is zero where a nonzero field is required")]
    ZeroField,

    #[error("non-finite value encountered in {0}")]
    NumericalBlowup(&'static str),

    #[error("limit solution is degenerate: smallest singular value {sigma_min:e} below {threshold:e}")]
    Degenerate { sigma_min: f64, threshold: f64 },

    #[error("linear operator is numerically singular: {0}")]
    Singular(String),

    #[error("fixed-point iteration diverged at m = {m} (contraction estimate {factor} >= 1)")]
    Divergence { m: f64, factor: f64 },

    #[error("Neumann series not applicable: operator norm estimate {norm} >= 1")]
    NeumannNotApplicable { norm: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    NotConverged { what: &'static str, residual: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (last change {change:e})")]
    QuadratureTolerance { tolerance: f64, change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
