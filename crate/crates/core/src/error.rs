use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the reachability engine.
///
/// Variants are grouped so that front ends can map them onto exit codes
/// through [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("dimension mismatch on '{dim}': {reason}")]
    DimMismatch { dim: String, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid target: {0}")]
    Target(String),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("missing range for state '{0}'")]
    MissingRange(String),
    #[error("non-finite value in component '{component}'")]
    NonFiniteFlow { component: String },
    #[error("non-finite update at grid index {index} (time {time})")]
    NonFiniteUpdate { index: usize, time: f64 },
    #[error("point {0:?} outside computation bounds")]
    OutOfBounds(Vec<f64>),
    #[error("resource cap: {requested} grid points requested, cap is {cap}")]
    ResourceCap { requested: usize, cap: usize },
    #[error("value file: {0}")]
    Format(String),
    #[error("value file holds a non-finite entry at flat index {0}")]
    NonFiniteValue(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Resource,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFiniteFlow { .. } | Error::NonFiniteUpdate { .. } => ErrorKind::Numeric,
            Error::ResourceCap { .. } => ErrorKind::Resource,
            Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
