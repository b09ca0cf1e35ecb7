//! Error types shared across the crate.

use thiserror::Error;

/// A configuration rejected at construction time.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Parse failure in a binary container (PPM/PGM raster or JVF tensor file).
///
/// Every variant carries the byte offset at which the problem was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic at byte {offset}: expected {expected}")]
    BadMagic { offset: usize, expected: &'static str },

    #[error("malformed header at byte {offset}: {reason}")]
    Header { offset: usize, reason: String },

    #[error("unsupported maxval {maxval} at byte {offset}: only 255 is supported")]
    Maxval { offset: usize, maxval: u64 },

    #[error("truncated input at byte {offset}: expected {expected} more bytes")]
    Truncated { offset: usize, expected: usize },

    #[error("inconsistent dimensions at byte {offset}: {reason}")]
    Dimensions { offset: usize, reason: String },
}
