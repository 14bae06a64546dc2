//! Shared pieces of the `osr` command-line tool: file formats and report
//! documents. The binary itself lives in `main.rs`.

pub mod document;
pub mod io;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn consistency(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<osr_core::Error> for CliError {
    fn from(err: osr_core::Error) -> Self {
        CliError::parse(err.to_string())
    }
}
