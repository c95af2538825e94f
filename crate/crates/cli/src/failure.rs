use std::path::Path;
use std::process::ExitCode;

use serde_json::json;

/// A command failure, reported on stderr as JSON with a matching exit code:
/// 1 domain/validation, 2 usage, 3 I/O.
#[derive(Debug)]
pub struct Failure {
    pub exit: u8,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
    pub line: Option<u64>,
}

impl Failure {
    fn new(exit: u8, code: impl Into<String>, message: impl Into<String>) -> Self {
        Failure {
            exit,
            code: code.into(),
            message: message.into(),
            path: None,
            line: None,
        }
    }

    pub fn usage(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(2, code, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            path: Some(path.display().to_string()),
            ..Self::new(3, "io", format!("{}: {err}", path.display()))
        }
    }

    pub fn new_io(message: impl Into<String>) -> Self {
        Self::new(3, "io", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(1, "internal", message)
    }

    pub fn report(&self) -> ExitCode {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(p) = &self.path {
            err["path"] = json!(p);
        }
        if let Some(l) = self.line {
            err["line"] = json!(l);
        }
        eprintln!("{}", json!({ "error": err }));
        ExitCode::from(self.exit)
    }
}

impl From<poseguard_core::Error> for Failure {
    fn from(e: poseguard_core::Error) -> Self {
        use poseguard_core::Error as E;
        let (exit, code) = match &e {
            E::Io { .. } => (3, "io"),
            E::InvalidParams(_) => (2, "invalid_params"),
            E::Parse { .. } => (1, "parse"),
            E::InsufficientData(_) => (1, "insufficient_data"),
            E::Invalid(_) => (1, "invalid"),
        };
        Failure {
            path: e.path().map(|p| p.display().to_string()),
            line: e.line(),
            ..Self::new(exit, code, e.to_string())
        }
    }
}
