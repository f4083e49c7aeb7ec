use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon too small: {0}")]
    HorizonTooSmall(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("fit window too small: {0}")]
    WindowTooSmall(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("solver did not converge: {0}")]
    SolverDiverged(String),

    #[error("integer window too small: {0}")]
    IntegerWindow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
