use std::process::ExitCode;

/// Harness-level error split by exit code: contract violations exit 1,
/// I/O problems exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Contract(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn contract(msg: impl Into<String>) -> CliError {
        CliError::Contract(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Contract(_) => ExitCode::from(1),
            CliError::Io { .. } => ExitCode::from(2),
        }
    }
}

impl From<sod_core::Error> for CliError {
    fn from(e: sod_core::Error) -> Self {
        CliError::Contract(e.to_string())
    }
}

/// Attach a path/context string to an I/O error.
pub trait IoContext<T> {
    fn io_ctx(self, context: impl Into<String>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_ctx(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|source| CliError::Io {
            context: context.into(),
            source,
        })
    }
}
