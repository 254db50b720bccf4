use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by a learned-component client.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OracleError {
    /// Transport-level failure. Always surfaced to the caller.
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    /// A scripted mock had nothing registered for the request.
    #[error("no scripted response matches: {0}")]
    ScriptMiss(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol is empty after normalization")]
    EmptySymbol,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("overlay for case `{0}` already exists")]
    DuplicateCase(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("edit for case `{edit}` applied to overlay of case `{overlay}`")]
    CaseMismatch { overlay: String, edit: String },

    #[error("edit seq {seq} is not greater than last applied seq {last} in case `{case_id}`")]
    SeqOutOfOrder { case_id: String, seq: u64, last: u64 },

    #[error("no triple could be extracted from edit statement: {0:?}")]
    ExtractionFailed(String),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("could not parse decomposition: {0}")]
    DecompositionParse(String),

    #[error("schema error in record {index}: missing or invalid field `{field}`")]
    Schema { index: usize, field: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable name of the error variant for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySymbol => "EmptySymbol",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateCase(_) => "DuplicateCase",
            Error::UnknownCase(_) => "UnknownCase",
            Error::CaseMismatch { .. } => "CaseMismatch",
            Error::SeqOutOfOrder { .. } => "SeqOutOfOrder",
            Error::ExtractionFailed(_) => "ExtractionFailed",
            Error::Oracle(OracleError::Unavailable(_)) => "OracleUnavailable",
            Error::Oracle(OracleError::ScriptMiss(_)) => "ScriptMiss",
            Error::DecompositionParse(_) => "DecompositionParseError",
            Error::Schema { .. } => "SchemaError",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    /// True for errors caused by bad user input rather than internal faults.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Oracle(OracleError::Unavailable(_)))
    }
}
