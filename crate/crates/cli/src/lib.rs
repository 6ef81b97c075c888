//! Command implementations behind the `specgraph` binary.

pub mod commands;
pub mod config;

use specgraph::Error;

/// Process exit status for an error category.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        "config" => 2,
        "data" => 3,
        _ => 4,
    }
}

/// Machine-readable error report printed on stderr.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({
        "error": err.kind(),
        "exit_code": exit_code(err),
        "message": err.to_string(),
    })
    .to_string()
}
