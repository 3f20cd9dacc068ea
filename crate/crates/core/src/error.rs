use thiserror::Error;

use crate::sim::SimResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A matrix that must be invertible (mass matrix, J, K) is numerically singular.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// The requested closed-loop parameters violate an admissibility condition.
    #[error("shaping infeasible: {matrix} {reason}")]
    ShapingInfeasible { matrix: &'static str, reason: String },

    #[error("parametrization singular: (K_F + K_G + I) is not invertible")]
    ParametrizationSingular,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("transform singular: {0}")]
    TransformSingular(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("state-space system has {states} states; polynomial conversion is limited to {limit} (use a reduced model)")]
    TooManyStates { states: usize, limit: usize },

    /// Neither polynomial construction reproduced the state-space response.
    #[error("transfer-function conversion is inaccurate (relative error {error:e})")]
    ConversionAccuracy { error: f64 },

    #[error("root finding did not converge after {iterations} iterations (max residual {max_residual:e})")]
    RootFinding {
        iterations: usize,
        max_residual: f64,
    },

    /// Integration produced a non-finite state. `partial` holds everything recorded
    /// up to the last finite step when the caller produced a full result series.
    #[error("simulation diverged at t = {time} s")]
    Divergence {
        time: f64,
        partial: Option<Box<SimResult>>,
    },
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }
}
