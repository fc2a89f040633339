use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point {x} lies outside the mesh domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("negative diffusion coefficient {value} at node {node}")]
    NegativeDiffusion { node: usize, value: f64 },

    #[error("zero pivot in tridiagonal sweep at row {row}")]
    ZeroPivot { row: usize },

    #[error("invalid control set: {0}")]
    InvalidControlSet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("policy iteration did not converge within {iterations} iterations at step {step}")]
    NotConverged { step: usize, iterations: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
