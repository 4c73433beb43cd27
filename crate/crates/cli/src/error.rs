use std::fmt::Display;
use std::path::Path;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Command failures, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, missing inputs or invalid settings.
    #[error("{0}")]
    Usage(String),

    /// A pipeline stage failed on valid input.
    #[error("{stage}: {message}")]
    Runtime { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime { .. } => 1,
        }
    }
}

/// Attaches a stage name (runtime failure) or marks an error as a usage
/// problem.
pub trait Context<T> {
    fn stage(self, stage: &str) -> Result<T>;
    fn usage(self) -> Result<T>;
}

impl<T, E: Display> Context<T> for std::result::Result<T, E> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| CliError::Runtime {
            stage: stage.to_string(),
            message: e.to_string(),
        })
    }

    fn usage(self) -> Result<T> {
        self.map_err(|e| CliError::Usage(e.to_string()))
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} is not a directory: {}",
            path.display()
        )))
    }
}
