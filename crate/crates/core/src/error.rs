use std::path::PathBuf;

/// Errors raised anywhere in the library. Each variant maps to a stable
/// category string and CLI exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-parsable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Capacity(_) => "capacity",
            Error::State(_) => "state",
            Error::Divergence(_) => "divergence",
            Error::Schema { .. } => "schema",
            Error::UnsupportedFormat(_) => "unsupported-format",
            Error::Corrupt(_) => "corrupt",
            Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Capacity(_) => 4,
            Error::Divergence(_) => 5,
            Error::UnsupportedFormat(_) | Error::Corrupt(_) | Error::Validation(_) => 6,
            Error::Shape(_) | Error::Domain(_) | Error::State(_) => 7,
        }
    }
}
