use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends (CLI exit codes, Python exceptions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: {0}")]
    TrainingDiverged(Divergence),
    #[error("empty batch")]
    EmptyBatch,
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("pair {index} is degenerate: |s|_inf = {norm:e} is below {threshold:e}")]
    DegeneratePair { index: usize, norm: f64, threshold: f64 },
    #[error("covariance matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("solver unstable: {0}")]
    SolverUnstable(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("incompatible artifacts: {0}")]
    Incompatible(String),
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error("empty report")]
    EmptyReport,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where and why training produced a non-finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub member: Option<usize>,
    pub iteration: Option<u64>,
    pub reason: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(member) = self.member {
            write!(f, "member {member}")?;
            if let Some(it) = self.iteration {
                write!(f, " at iteration {it}")?;
            }
            write!(f, ": ")?;
        }
        f.write_str(&self.reason)
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArchitecture(_)
            | Error::InvalidConfig(_)
            | Error::ConfigParse(_)
            | Error::Incompatible(_) => ErrorKind::Config,
            Error::TrainingDiverged(_)
            | Error::NotPositiveDefinite { .. }
            | Error::SolverUnstable(_)
            | Error::UndefinedCorrelation(_) => ErrorKind::Numerical,
            Error::Shape(_)
            | Error::EmptyBatch
            | Error::DegenerateTarget(_)
            | Error::DegeneratePair { .. }
            | Error::InvalidGrid(_)
            | Error::Format(_)
            | Error::Corrupt(_)
            | Error::InvalidReport(_)
            | Error::EmptyReport
            | Error::InvalidReference(_)
            | Error::Io(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn diverged(reason: impl Into<String>) -> Self {
        Error::TrainingDiverged(Divergence {
            member: None,
            iteration: None,
            reason: reason.into(),
        })
    }
}
