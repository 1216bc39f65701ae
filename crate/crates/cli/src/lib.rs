//! Reproducible pipelines around the `robust-koopman` library: simulate,
//! fit, spectrum, predict and bench.

pub mod commands;
pub mod config;
pub mod pipeline;

use robust_koopman::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Numerical(_) => CliError::Numerical(msg),
            Error::Io(_) | Error::Csv(_) => CliError::Io(msg),
            Error::Dimension(_)
            | Error::Domain(_)
            | Error::EmptyData(_)
            | Error::Config(_)
            | Error::UnsupportedDictionary(_)
            | Error::Json(_) => CliError::Config(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::UnsupportedDictionary("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Numerical("x".into())).exit_code(), 3);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from(Error::Io(io)).exit_code(), 4);
    }
}
