use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped so a front end can map them onto process exit codes
/// (see [`Error::kind`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("frequency {frequency} Hz is not realisable at {refresh_rate} Hz refresh; maximum admissible is {max_frequency} Hz")]
    Infeasible {
        frequency: f64,
        refresh_rate: f64,
        max_frequency: f64,
    },

    #[error("{what} at {frequency} Hz is at or above the Nyquist frequency {nyquist} Hz")]
    Nyquist {
        what: String,
        frequency: f64,
        nyquist: f64,
    },

    #[error("insufficient length: {0}")]
    Length(String),

    #[error("singular covariance: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {id}: {source}")]
    Trial {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the offending file to an error raised while reading it.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::File { .. }) => e,
            other => Error::File {
                path: path.into(),
                source: Box::new(other),
            },
        }
    }

    /// Attach the trial being processed.
    pub fn in_trial(self, id: impl Into<String>) -> Self {
        match self {
            e @ (Error::File { .. } | Error::Trial { .. }) => e,
            other => Error::Trial {
                id: id.into(),
                source: Box::new(other),
            },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::Infeasible { .. }
            | Error::Nyquist { .. }
            | Error::Length(_) => ErrorKind::Validation,
            Error::Singular(_) | Error::Numerical(_) => ErrorKind::Numerical,
            Error::Parse { .. } | Error::Io { .. } => ErrorKind::Io,
            Error::File { source, .. } | Error::Trial { source, .. } => source.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
