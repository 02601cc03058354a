use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ROW_FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const FIT: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit failed: {0}")]
    Fit(noon_core::Error),

    #[error("{} reproduction row(s) failed: {}", .0.len(), .0.join(", "))]
    RowFailure(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(noon_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::RowFailure(_) => exit::ROW_FAILURE,
            CliError::Fit(_) => exit::FIT,
            CliError::Config(_) | CliError::Io { .. } | CliError::Core(_) => exit::CONFIG,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<noon_core::Error> for CliError {
    fn from(e: noon_core::Error) -> Self {
        use noon_core::Error as E;
        match e {
            E::FitFailure { .. } | E::IllPosed(_) => CliError::Fit(e),
            E::InvalidArgument(_) | E::OutOfRange(_) | E::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Core(other),
        }
    }
}
