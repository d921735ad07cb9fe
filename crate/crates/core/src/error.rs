use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("safety filter infeasible: `{constraint}` violated by {violation:.3e}")]
    Infeasible { constraint: String, violation: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64, last_iterate: Vec<f64> },

    #[error("control deviation is zero; nothing to invert")]
    ZeroDeviation,

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("no consistent obstacle: discriminant {discriminant:.3e} is negative")]
    NoConsistentObstacle { discriminant: f64 },

    #[error("observation has no active formation partner")]
    MissingPartner,

    #[error("observation is inconsistent with the dynamics (mismatch {0:.3e})")]
    InconsistentObservation(f64),

    #[error("scenario placement failed after {attempts} draws; try fewer obstacles")]
    Placement { attempts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
