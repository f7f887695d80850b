//! Library half of the `bagau` command: configuration handling, overlay
//! rendering and one module per subcommand.

pub mod commands;
pub mod config;
pub mod overlay;

use bagau_core::{Error, ErrorCategory};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}
