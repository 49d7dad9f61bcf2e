use std::process::ExitCode;

use damp_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("verification failed:\n  {}", .0.join("\n  "))]
    Tampered(Vec<String>),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 0 success, 1 i/o, 2 validation, 3 numerical failure, 4 budget.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) | CliError::Tampered(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::Io(_) => 1,
                CoreError::Budget { .. } => 4,
                CoreError::Numerical(_)
                | CoreError::DegenerateSpectrum { .. }
                | CoreError::Degenerate(_)
                | CoreError::NonConvergence { .. } => 3,
                CoreError::Parameter(_)
                | CoreError::Dimension(_)
                | CoreError::Layout(_)
                | CoreError::Config(_)
                | CoreError::Format(_) => 2,
            },
        })
    }
}

/// Flatten a core error into field messages prefixed with `field`.
pub fn field_errors(field: &str, e: CoreError) -> Vec<String> {
    match e {
        CoreError::Config(msgs) => msgs.into_iter().map(|m| format!("{field}: {m}")).collect(),
        other => vec![format!("{field}: {other}")],
    }
}
