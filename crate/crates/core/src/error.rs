//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("output symbol table of the left machine differs from the input symbol table of the right machine")]
    SymbolTableMismatch,

    #[error("machine contains a cycle among useful states")]
    CyclicMachine,

    #[error("machine has no accepting path")]
    NoAcceptingPath,

    #[error("word {word:?} has no segmentation under the dictionary")]
    Unsegmentable { word: String },

    #[error("subword {subword:?} contains the reserved marker character '+'")]
    ReservedMarker { subword: String },
}

pub type Result<T> = std::result::Result<T, Error>;
