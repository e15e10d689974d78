use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error(transparent)]
    Core(#[from] spkver_core::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { context: context.into(), message: message.into() }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use spkver_core::Error as C;
        match self {
            Error::Usage(_) => 1,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Core(
                C::NonFinite { .. } | C::DegenerateCovariance(_) | C::DegenerateInput(_) | C::ZeroVector,
            ) => 3,
            Error::Core(C::InvalidConfig(_) | C::InvalidArchitecture(_) | C::InvalidMargin(_)) => 1,
            _ => 2,
        }
    }
}
