use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("model configurations differ: {0}")]
    ConfigMismatch(String),

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: bad magic number: expected {expected:#010x}, found {actual:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        actual: u32,
    },

    #[error("{path}: offset {offset}: {message}")]
    Idx {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u64,
        expected: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Invalid { .. } => "invalid",
            Error::ConfigMismatch(_) => "config_mismatch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::Csv { .. } => "csv",
            Error::IdxMagic { .. } | Error::Idx { .. } => "idx",
            Error::Version { .. } => "version",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    /// The offending field, path or layer, when one is known.
    pub fn subject(&self) -> Option<String> {
        match self {
            Error::Shape { context, .. } => Some(context.clone()),
            Error::NonFinite(what) => Some(what.clone()),
            Error::Invalid { field, .. } => Some(field.clone()),
            Error::Csv { path, .. }
            | Error::IdxMagic { path, .. }
            | Error::Idx { path, .. }
            | Error::Io { path, .. }
            | Error::Json { path, .. } => Some(path.display().to_string()),
            Error::Version { what, .. } => Some((*what).to_string()),
            Error::LabelOutOfRange { .. } => Some("labels".to_string()),
            Error::ConfigMismatch(_) => Some("config".to_string()),
        }
    }
}
