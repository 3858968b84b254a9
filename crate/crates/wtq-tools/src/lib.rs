//! IO companion to `wtq-core`: binary tensor/artifact formats, key=value
//! spec files, the sweep harness, and the `wtq` command-line interface.

// Validations are written as `!(x > 0.0)` so NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

pub mod cli;
pub mod format;
pub mod kv;
pub mod sweep;

/// Command-level error carrying the process exit code.
///
/// 0 success, 2 input validation, 3 verification failure, 1 anything else.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Violation(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Violation(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(msg) | CliError::Violation(msg) | CliError::Internal(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl std::error::Error for CliError {}
