use std::fmt;
use std::path::Path;

use groundkit_core::error::{CodecError, FusionError, IngestError, MetricsError, PromptError};

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_IO: u8 = 2;

impl CliError {
    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INVALID, error: error.into() }
    }

    pub fn io(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_IO, error: error.into() }
    }

    pub fn invalid_msg(msg: impl fmt::Display) -> Self {
        Self::invalid(anyhow::anyhow!("{msg}"))
    }

    pub fn io_msg(msg: impl fmt::Display) -> Self {
        Self::io(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } | IngestError::Prompt(PromptError::Io { .. }) => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } | PromptError::Parse { .. } | PromptError::Version { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::invalid(e)
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        Self::invalid(e)
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        Self::invalid(e)
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io_msg(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io_msg(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io_msg(format!("cannot write {}: {e}", path.display())))
}
