use buttonsim_core::Error as CoreError;

/// Failure of a CLI operation; `exit_code` maps it onto the process status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Parse(String),
    #[error("simulation diverged: {0}")]
    Divergence(CoreError),
    #[error("post-processing failed: {0}")]
    PostProcessing(CoreError),
    #[error(transparent)]
    Core(CoreError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::PostProcessing(_) => 4,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Classifies an error raised while setting up or running the solver.
    pub fn solver(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } => CliError::Divergence(e),
            other => CliError::Core(other),
        }
    }

    pub fn post(e: CoreError) -> Self {
        CliError::PostProcessing(e)
    }
}
