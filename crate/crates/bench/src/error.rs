use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{flag}: {message}")]
    Config { flag: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Core(#[from] cdkf::Error),
}

impl BenchError {
    pub fn config(flag: &str, message: impl Into<String>) -> Self {
        BenchError::Config {
            flag: flag.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// The offending command-line flag for configuration errors.
    pub fn flag(&self) -> Option<&str> {
        match self {
            BenchError::Config { flag, .. } => Some(flag),
            _ => None,
        }
    }

    /// 1 for configuration problems, 2 for file-system problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Io { .. } => 2,
            BenchError::Core(cdkf::Error::Io { .. }) => 2,
            _ => 1,
        }
    }
}
