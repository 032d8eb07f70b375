use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Variants fall into two families reported by [`Error::kind`]: bad input
/// (files, schemas, parameters) and numerically degenerate data.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path} at row {row}: {message}")]
    Format {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("parse error in {path} at row {row}, column {column:?}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("score {value} for trial {trial_id:?} ({field}) is outside [1, 9]")]
    ScoreRange {
        trial_id: String,
        field: &'static str,
        value: f64,
    },

    #[error("duplicate trial id {0:?}")]
    DuplicateTrial(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("class {class} has {count} members, fewer than the {k} folds requested")]
    ClassTooSmall {
        class: String,
        count: usize,
        k: usize,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed{}: {source}", trial.as_ref().map(|t| format!(" for trial {t}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        trial: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Degenerate(_) | Error::ClassTooSmall { .. } => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage and trial it came from.
    pub fn in_stage(self, stage: &'static str, trial: Option<&str>) -> Self {
        Error::Stage {
            stage,
            trial: trial.map(str::to_owned),
            source: Box::new(self),
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
