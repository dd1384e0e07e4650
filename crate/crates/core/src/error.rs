use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a rotation: {0}")]
    NotARotation(String),
    #[error("invalid hessian: {0}")]
    InvalidHessian(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("duplicate measurement for camera pair ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) references a camera outside 0..{n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("measurement graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
