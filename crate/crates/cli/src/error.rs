use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cpinn::Error),
    #[error("no completed run found under {}", .0.display())]
    MissingRun(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// 0 success, 2 config or input error, 3 state mismatch, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Context { source, .. } => source.exit_code(),
            CliError::Core(e) if e.is_state_mismatch() => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::MissingRun("r".into()).exit_code(), 2);
        assert_eq!(CliError::Core(cpinn::Error::SpecMismatch("w".into())).exit_code(), 3);
        let num = CliError::Core(cpinn::Error::InvalidStressState { t: 1.0, f: 2.0, tol: 0.0 });
        assert_eq!(num.context("sample 3").exit_code(), 4);
    }
}
