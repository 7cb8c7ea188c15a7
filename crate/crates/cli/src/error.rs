use std::io;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: tlh_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A sweep stopped early; the partial CSV was still written.
    #[error("sweep aborted at {setting}: {source}")]
    Sweep {
        setting: String,
        #[source]
        source: Box<CliError>,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core { source, .. } => match source {
                tlh_core::Error::Diverged { .. } => EXIT_DIVERGED,
                tlh_core::Error::InfeasibleSampling(_) => EXIT_INFEASIBLE,
                tlh_core::Error::InvalidConfig(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
            CliError::Io { .. } => EXIT_DATA,
            CliError::Sweep { source, .. } => source.exit_code(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

/// Attaches a human-readable context to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for tlh_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
