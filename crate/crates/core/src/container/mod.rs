//! Read-only parsers for the containers that wrap model pickles and configs.

pub mod h5;
pub mod zip;

use thiserror::Error;

pub use h5::{extract_h5_model_config, ConfigSource, ExtractedConfig, HDF5_SIGNATURE};
pub use zip::{find_pickle_payloads, list_entries, read_entry, ArchiveEntry, CompressionMethod, ZipWriter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("no end of central directory record")]
    NoCentralDirectory,
    #[error("corrupt header at offset {offset}")]
    CorruptHeader { offset: u64 },
    #[error("unsupported compression or encryption for {path}")]
    UnsupportedMethod { path: String },
    #[error("size mismatch for {path}: expected {expected}, got {actual}")]
    SizeMismatch { path: String, expected: u64, actual: u64 },
    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: String },
    #[error("inflate failed for {path}: {reason}")]
    InflateError { path: String, reason: String },
    #[error("declared size {declared} exceeds cap {cap}")]
    CapExceeded { declared: u64, cap: u64 },
    #[error("not an HDF5 file")]
    NotHdf5,
    #[error("no model_config attribute found")]
    ConfigNotFound,
    #[error("unbalanced JSON starting at offset {start_offset}")]
    UnbalancedJson { start_offset: u64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e.to_string())
    }
}
