use thiserror::Error;

/// Errors raised by the geometric and stochastic routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the chart domain: {0}")]
    Domain(String),
    #[error("frame is singular at the given point (determinant {0:.3e})")]
    SingularFrame(f64),
    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),
    #[error("point is characteristic: horizontal gradient norm {0:.3e}")]
    CharacteristicPoint(f64),
    #[error("point is not characteristic: residual {0:.3e}")]
    NotCharacteristic(f64),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("projection onto the surface failed: residual {0:.3e}")]
    ProjectionFailure(f64),
    #[error("integration step rejected below minimum size at s = {0}")]
    StepRejected(f64),
    #[error("too many aborted paths: {aborted} of {total}")]
    TooManyAborts { aborted: usize, total: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("requested derivative order {0} exceeds the supported maximum")]
    OrderExceeded(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
