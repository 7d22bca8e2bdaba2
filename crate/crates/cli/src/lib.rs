//! Library side of the `dynamo-forge` command-line tool: configuration,
//! the verification suite and the report-writing commands.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Invalid input, configuration or invocation; maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit codes: success, a failed check or run, and a usage error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.is::<UsageError>() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<dynamo_forge::DynamoError>() {
        Some(dynamo_forge::DynamoError::InvalidInput(_))
        | Some(dynamo_forge::DynamoError::Aliasing { .. })
        | Some(dynamo_forge::DynamoError::ResolutionMismatch { .. }) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}
