//! Errors of the command-line front end and their exit codes.

use serde_json::json;
use thiserror::Error;

/// Failure of a run, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags, configuration or parameters.
    #[error("{0}")]
    Usage(String),
    /// A numerical routine failed.
    #[error("{0}")]
    Numerical(String),
    /// Reading or writing artifacts failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// The error as the JSON object written to stderr and `error.json`.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

impl From<jeans_lab::Error> for CliError {
    fn from(e: jeans_lab::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let num: CliError = jeans_lab::Error::CflCollapse { t: 1.0, dt: 0.0 }.into();
        assert_eq!(num.exit_code(), 3);
        let usage: CliError = jeans_lab::Error::Domain("beta".into()).into();
        assert_eq!(usage.exit_code(), 2);
        assert_eq!(usage.to_json()["error"]["kind"], "usage");
    }
}
