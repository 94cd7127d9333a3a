//! Library side of the gdtm command-line tool: experiment configuration,
//! checkpoint and manifest formats, and the command implementations.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod manifest;

use gdtm::error::Error;

/// Process exit code for an error: 2 config/input, 3 numerical, 4 shape or
/// compatibility.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidParameter(_) | Error::InvalidSize(_) | Error::Parse(_) | Error::Io(_) => 2,
        Error::Numerical(_) => 3,
        Error::ShapeMismatch(_) | Error::IndexOutOfRange(_) | Error::Incompatible(_) => 4,
    }
}
