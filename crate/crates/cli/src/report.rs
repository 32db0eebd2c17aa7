//! Exit codes, errors and the versioned JSON report.

use std::fmt;
use std::path::Path;

use serde_json::{json, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_USAGE, message: message.to_string() }
    }

    pub fn input(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_INPUT, message: message.to_string() }
    }

    pub fn internal(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_INTERNAL, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Result of a command that ran to completion (exit code 0 or 3).
pub struct Outcome {
    pub code: u8,
    pub console: String,
    pub body: Value,
}

impl Outcome {
    pub fn ok(console: String, body: Value) -> Self {
        Outcome { code: EXIT_OK, console, body }
    }
}

pub fn envelope(command: &str, outcome: &Outcome) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "exit_code": outcome.code,
        "status": if outcome.code == EXIT_OK { "ok" } else { "validation_failed" },
        "result": outcome.body,
    })
}

pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

pub fn write_report(path: &Path, command: &str, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::write(path, to_pretty(&envelope(command, outcome)))
        .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}
