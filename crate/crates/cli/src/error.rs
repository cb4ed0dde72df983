use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] msgnn_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 2 | bad configuration or arguments |
    /// | 3 | missing file or other I/O failure |
    /// | 4 | malformed or mismatched input data |
    /// | 5 | non-finite values or numerical failure |
    /// | 6 | output failed an invariant check |
    pub fn exit_code(&self) -> u8 {
        use msgnn_core::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Invariant(_) => 6,
            Self::Core(e) => match e {
                E::InvalidConfig(_) | E::Parse(_) | E::InvalidMesh(_) => 2,
                E::Io(_) => 3,
                E::BadMagic { .. }
                | E::UnsupportedVersion(_)
                | E::Truncated { .. }
                | E::ChecksumMismatch { .. }
                | E::Malformed(_)
                | E::ShapeMismatch(_)
                | E::IndexOutOfRange { .. }
                | E::InvalidGraph(_) => 4,
                E::NonFinite(_) | E::PoissonNotConverged { .. } | E::UnstableTimeStep { .. } | E::Autodiff(_) => 5,
            },
        }
    }
}
