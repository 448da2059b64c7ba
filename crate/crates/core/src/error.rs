use thiserror::Error;

/// Errors raised by the design solvers and simulators.
///
/// The variants split into two families that front ends map to different
/// exit codes: bad inputs ([`Error::Invalid`], [`Error::Shape`]) and
/// numerical or search failures ([`Error::Solver`]).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub fn is_solver(&self) -> bool {
        matches!(self, Error::Solver(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
