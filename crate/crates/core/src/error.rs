use crate::fixedpoint::FixedPoint;
use crate::C64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectral point {0} is outside the admissible region (Im z > 0, or Im z = 0 with Re z < 0)")]
    InvalidPoint(C64),

    #[error("fixed-point iteration at z = {z} did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence {
        z: C64,
        iterations: usize,
        residual: f64,
        last: Box<FixedPoint>,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{} of {total} points failed (first at index {}: {})", failures.len(), failures[0].0, failures[0].1)]
    Grid {
        failures: Vec<(usize, Error)>,
        total: usize,
    },

    #[error("model file: {0}")]
    Format(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::Singular(_) => true,
            Error::Grid { failures, .. } => failures.iter().any(|(_, e)| e.is_numerical()),
            _ => false,
        }
    }
}
