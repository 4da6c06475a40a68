use std::path::{Path, PathBuf};

/// Everything a command can fail with.
///
/// [`CliError::exit_code`] maps input and parse problems to 1 and numerical
/// failures inside the library to 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: row {row}, column {column}: {message}")]
    Parse {
        origin: String,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {message}")]
    Input { origin: String, message: String },
    #[error("config {origin}: {message}")]
    Config { origin: String, message: String },
    #[error("{0}")]
    Core(#[from] credal_cert::Error),
    #[error("write failed: {0}")]
    Output(std::io::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(origin: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Input {
            origin: origin.into(),
            message: message.into(),
        }
    }

    pub fn config(origin: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            origin: origin.into(),
            message: message.into(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Core(e) if e.is_numerical())
    }

    pub fn exit_code(&self) -> u8 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
