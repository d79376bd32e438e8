use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cable angle theta_l = {theta_l} is too close to the horizontal singularity")]
    SingularConfiguration { theta_l: f64 },
    #[error("innovation covariance is ill-conditioned (condition number {cond:e})")]
    IllConditionedInnovation { cond: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tick {tick} (t = {time:.3} s): {source}")]
    AtTick {
        tick: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl From<payload_ocp::OcpError> for Error {
    fn from(e: payload_ocp::OcpError) -> Self {
        match e {
            payload_ocp::OcpError::DimensionMismatch(s) => Error::DimensionMismatch(s),
            payload_ocp::OcpError::InvalidData(s) => Error::SolverFailed(s),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
