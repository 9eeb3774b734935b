use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MidaError>;

#[derive(Debug, Error)]
pub enum MidaError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("bag{} has no instances", user_id.as_ref().map(|u| format!(" `{u}`")).unwrap_or_default())]
    EmptyBag { user_id: Option<String> },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// The optimizer left the region where its iterates are meaningful.
    #[error("divergence{}: {message}", iteration.map(|k| format!(" at outer iteration {k}")).unwrap_or_default())]
    Divergence {
        iteration: Option<usize>,
        message: String,
    },

    #[error("{}:{line}: column `{column}`: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{}: {message}: {}", file.display(), offenders.join(", "))]
    Validation {
        file: PathBuf,
        message: String,
        offenders: Vec<String>,
    },

    #[error("model file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MidaError {
    pub(crate) fn dimension(context: impl Into<String>, expected: usize, found: usize) -> Self {
        MidaError::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }

    /// Short machine-readable tag, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            MidaError::Dimension { .. } => "dimension",
            MidaError::EmptyBag { .. } => "empty_bag",
            MidaError::EmptyInput(_) => "empty_input",
            MidaError::UndefinedMetric(_) => "undefined_metric",
            MidaError::Divergence { .. } => "divergence",
            MidaError::Parse { .. } => "parse",
            MidaError::Validation { .. } => "validation",
            MidaError::Format(_) => "format",
            MidaError::Config(_) => "config",
            MidaError::Io { .. } => "io",
        }
    }
}
