use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec, its file formats and its evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("codebook mismatch: stream pins {expected:#018x}, codebook hashes to {actual:#018x}")]
    CodebookMismatch { expected: u64, actual: u64 },

    #[error("dictionary mismatch: stream pins id {expected:#010x}, dictionary id is {actual:#010x}")]
    DictionaryMismatch { expected: u32, actual: u32 },

    #[error("numerics error in {param}: {detail}")]
    Numerics { param: String, detail: String },

    #[error("degenerate norm: {0}")]
    DegenerateNorm(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the command-line front end.
    ///
    /// 2 = configuration, 3 = data or format, 4 = numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerics { .. } | Error::DegenerateNorm(_) => 4,
            Error::Format(_)
            | Error::Data(_)
            | Error::Range(_)
            | Error::Encoding(_)
            | Error::CorruptStream(_)
            | Error::CodebookMismatch { .. }
            | Error::DictionaryMismatch { .. }
            | Error::Io(_) => 3,
        }
    }
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
macro_rules! format_err {
    ($($arg:tt)*) => { $crate::error::Error::Format(format!($($arg)*)) };
}
pub(crate) use config_err;
pub(crate) use format_err;
