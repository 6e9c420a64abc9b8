use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: `{what}` has {found} samples, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// Configuration or input data failed schema/invariant validation.
    #[error("invalid `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("grid error: {0}")]
    Grid(String),

    /// The solver detected a blow-up or an invariant breach.
    #[error("numerical failure in {stage}: {diagnostic}")]
    Numerical { stage: String, diagnostic: String },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numerical(stage: impl Into<String>, diagnostic: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.into(),
            diagnostic: diagnostic.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors that mean the input was rejected before any numerics ran.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::Validation { .. }
                | Error::Domain(_)
                | Error::LengthMismatch { .. }
                | Error::Grid(_)
                | Error::Format { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::Numerical { .. })
    }
}
