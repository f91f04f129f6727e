//! Process-level error handling: every failure maps to a stable exit code
//! and a machine-readable record on stderr.
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success                                             |
//! | 1    | i/o or internal failure                             |
//! | 2    | invalid configuration or usage                      |
//! | 3    | numeric abort (non-finite values during a run)      |
//! | 4    | checks failed (oracle battery or diagnostics)       |

use dae_core::error::CoreError;
use serde::Serialize;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration: the message names the offending field(s).
    Config(String),
    /// A run produced non-finite values; the message names the operation.
    Numeric(String),
    /// Checks ran to completion but some failed.
    Checks {
        command: &'static str,
        failing: Vec<String>,
    },
    /// I/O or internal failure.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Checks { .. } => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Checks { .. } => "checks",
            CliError::Other(_) => "other",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Other(m) => m.clone(),
            CliError::Checks { command, failing } => {
                format!("{command}: {} check(s) failed: {}", failing.len(), failing.join(", "))
            }
        }
    }

    /// One-line JSON record for scripted consumers, printed to stderr.
    pub fn record_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: &'a str,
            message: String,
            exit_code: i32,
            #[serde(skip_serializing_if = "Vec::is_empty")]
            failing: Vec<String>,
        }
        let failing = match self {
            CliError::Checks { failing, .. } => failing.clone(),
            _ => Vec::new(),
        };
        serde_json::to_string(&Record {
            error: Inner {
                kind: self.kind_label(),
                message: self.message(),
                exit_code: self.exit_code(),
                failing,
            },
        })
        .unwrap_or_else(|_| format!("{{\"error\":{{\"exit_code\":{}}}}}", self.exit_code()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Config(_) => CliError::Config(err.to_string()),
            CoreError::Numeric { .. } | CoreError::Singular { .. } => {
                CliError::Numeric(err.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Other(format!("i/o error: {err}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Other(format!("serialization error: {err}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
