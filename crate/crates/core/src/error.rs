use thiserror::Error;

/// Every failure the library can report.
///
/// Variants map onto stable `kind` strings (see [`Error::kind`]) so the CLI
/// can emit machine-readable diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image {height}x{width} cannot be tiled by patch size {patch}")]
    Tiling {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error(
        "spectral mismatch: image has {image_channels} channels, kernel expects {kernel_channels}"
    )]
    SpectralMismatch {
        image_channels: usize,
        kernel_channels: usize,
    },

    #[error("grid alignment: tokens are {tokens:?}, positional embedding is {embed:?}")]
    Alignment {
        tokens: (usize, usize),
        embed: (usize, usize),
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupted payload: expected {expected} bytes, found {actual}")]
    Corruption { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numerical(_) => "numerical",
            Error::Config(_) => "config",
            Error::Tiling { .. } => "tiling",
            Error::SpectralMismatch { .. } => "spectral_mismatch",
            Error::Alignment { .. } => "alignment",
            Error::Format(_) => "format",
            Error::Corruption { .. } => "corruption",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
