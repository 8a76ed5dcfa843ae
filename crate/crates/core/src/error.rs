use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so the CLI can map them onto stable exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("bad magic: expected \"{}\", found \"{}\"", .expected.escape_ascii(), .found.escape_ascii())]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("dim mismatch: {0}")]
    DimMismatch(String),

    #[error("duplicate record id {0}")]
    DuplicateId(u64),

    #[error("unknown record id {0}")]
    UnknownId(u64),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 usage, 3 data/schema, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) => 2,
            Error::NonFinite(_) | Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}
