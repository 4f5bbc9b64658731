//! File formats, experiment orchestration and the command-line front end
//! for `modit-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod report;
pub mod vocab_file;

use modit_core::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("format version {found} is not supported (expected {expected})")]
    Version { found: String, expected: String },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}
