use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm{}", .0.as_ref().map(|id| format!(" (record {id})")).unwrap_or_default())]
    ZeroNormVector(Option<String>),

    #[error("dimension mismatch: expected {expected}, got {actual}{}", .record.as_ref().map(|id| format!(" (record {id})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        record: Option<String>,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {0:?} has no cluster assignment")]
    MissingAssignment(String),

    #[error("training needs at least two classes, found {0}")]
    SingleClass(usize),

    #[error("class {0:?} has no training samples")]
    EmptyClass(String),

    #[error("no client pairs in gallery")]
    NoClientPairs,

    #[error("no impostor pairs in gallery")]
    NoImpostorPairs,

    #[error("score density is empty")]
    EmptyDensity,

    #[error("no threshold on the grid satisfies {0}")]
    Unsatisfiable(String),

    #[error("record {0:?} has no track id")]
    MissingTrackId(String),

    #[error("record {0:?} has no quality")]
    MissingQuality(String),

    #[error("bad query: {0}")]
    BadQuery(String),

    #[error("unknown track {0:?}")]
    UnknownTrack(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Attaches a record id to errors that carry one.
    pub(crate) fn for_record(self, id: &str) -> Self {
        match self {
            Error::ZeroNormVector(None) => Error::ZeroNormVector(Some(id.to_string())),
            Error::DimensionMismatch {
                expected,
                actual,
                record: None,
            } => Error::DimensionMismatch {
                expected,
                actual,
                record: Some(id.to_string()),
            },
            other => other,
        }
    }
}
