//! Command-line front end: configuration, manifests and subcommands.

pub mod commands;
pub mod config;
pub mod manifest;

use h2m_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIAGNOSTIC: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Machine-readable error report.
pub fn error_json(e: &Error) -> serde_json::Value {
    serde_json::json!({
        "error": { "code": e.code(), "message": e.to_string() },
        "exit_code": exit_code(e),
    })
}
