//! CLI error handling: every failure maps to an exit code (1 computation,
//! 2 i/o or configuration) and a machine-readable JSON object on stderr.

use serde::Serialize;
use uqfuse_core::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Io,
    Config,
    Compute,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    pub path: Option<String>,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(message: impl Into<String>, path: Option<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: message.into(),
            path,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
            path: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Compute => 1,
            ErrorKind::Io | ErrorKind::Config => 2,
        }
    }

    /// `{"error": {"kind": ..., "message": ..., "path": ...}}` on stderr.
    pub fn emit(&self) {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: ErrorKind,
            message: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: &'a Option<String>,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let wrapper = Wrapper {
            error: Body {
                kind: self.kind,
                message: &self.message,
                path: &self.path,
            },
        };
        eprintln!(
            "{}",
            serde_json::to_string(&wrapper).unwrap_or_else(|_| self.message.clone())
        );
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Io { .. } => ErrorKind::Io,
            CoreError::Numerical(_) => ErrorKind::Compute,
            _ => ErrorKind::Config,
        };
        let path = match &e {
            CoreError::Io { path, .. } => Some(path.clone()),
            _ => None,
        };
        Self {
            kind,
            message: e.to_string(),
            path,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}
