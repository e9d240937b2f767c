use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Every problem found while validating the configuration, before any
    /// work started.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Engine(#[from] pacmetric::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Usage(_) => "usage",
            CliError::Engine(pacmetric::Error::Format { .. }) => "format",
            CliError::Engine(pacmetric::Error::Io { .. }) | CliError::Io { .. } => "io",
            CliError::Engine(_) => "engine",
            CliError::Csv(_) | CliError::Json(_) => "serialization",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable error record written to stderr.
    pub fn record(&self) -> serde_json::Value {
        let messages = match self {
            CliError::Validation(m) => m.clone(),
            other => vec![other.to_string()],
        };
        json!({ "error": { "kind": self.kind(), "messages": messages } })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
