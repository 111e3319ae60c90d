use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures of the command-line front end, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration could not be read, parsed or validated.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// A numerical routine failed while running an experiment.
    #[error("numerical failure: {0}")]
    Numerical(#[from] mfugsa_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An artifact directory is missing files or holds malformed ones.
    #[error("artifact error: {0}")]
    Artifact(String),

    /// The run completed but at least one acceptance check failed.
    #[error("acceptance failure: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 numerical, 4 acceptance, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Acceptance(_) => 4,
            CliError::Io { .. } | CliError::Artifact(_) => 1,
        }
    }
}
