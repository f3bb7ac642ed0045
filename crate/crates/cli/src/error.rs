use thiserror::Error;

/// Failures surfaced by the driver, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Geometry(String),
    #[error("unknown command {0:?} (expected one of eigen, lambda-star, solve, pipeline, sweep, certify, check-hypotheses, refine)")]
    UnknownCommand(String),
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Geometry(_) => 4,
            CliError::UnknownCommand(_) => 5,
            CliError::Malformed(_) => 6,
            CliError::Io(_) => 7,
        }
    }
}

impl From<ballcrit::Error> for CliError {
    fn from(e: ballcrit::Error) -> Self {
        use ballcrit::Error as E;
        match e {
            E::NotConverged { .. } | E::NotAntiCoercive(_) | E::DerivativeUnavailable => {
                CliError::NotConverged(e.to_string())
            }
            E::GeometryViolated(_) => CliError::Geometry(e.to_string()),
            E::ShapeMismatch { .. } | E::DenseCapExceeded { .. } | E::InvalidInput(_) | E::MeshTooCoarse(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}
