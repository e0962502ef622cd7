use serde_json::json;
use subst_spectra::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or malformed input; exit code 3.
    #[error("{0}")]
    Parse(String),
    /// Input that parses but breaks an invariant; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// A computation failed or a check did not hold; exit code 1.
    #[error("{0}")]
    Failure(String),
    /// A support or enumeration cap was hit; exit code 2.
    #[error("{0}")]
    Cap(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Failure(_) => 1,
            CliError::Cap(_) => 2,
            CliError::Parse(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Failure(_) => "failure",
            CliError::Cap(_) => "resource-cap",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema_version": crate::report::SCHEMA_VERSION,
            "error": { "kind": self.kind(), "message": self.to_string() },
        })
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Parse(m) => CliError::Parse(format!("{what}: {m}")),
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Failure(m) => CliError::Failure(format!("{what}: {m}")),
            CliError::Cap(m) => CliError::Cap(format!("{what}: {m}")),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::UnknownLetter(_) => CliError::Validation(e.to_string()),
            Error::CapExceeded { .. } | Error::WindowTooLong(..) => CliError::Cap(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}
