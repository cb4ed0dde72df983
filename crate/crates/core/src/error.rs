use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("pressure solve did not converge in {iterations} iterations (residual {residual:e})")]
    PoissonNotConverged { iterations: usize, residual: f64 },

    #[error("time step {dt} too large for stability at step {step} (coefficient sum {coefficient})")]
    UnstableTimeStep { step: u64, dt: f64, coefficient: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a config value, naming the key on failure.
pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse(format!("bad value '{value}' for {key}")))
}
