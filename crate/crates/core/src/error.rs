use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by model construction and the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("gap closure at k = ({kx}, {ky}): gap {gap:e}")]
    GapClosure { kx: f64, ky: f64, gap: f64 },

    #[error("bands {n} and {m} are degenerate at k = ({kx}, {ky}) (gap {gap:e})")]
    Degenerate {
        kx: f64,
        ky: f64,
        n: usize,
        m: usize,
        gap: f64,
    },

    #[error("vanishing link overlap {overlap:e} for band {band} at k = ({kx}, {ky}); grid too coarse")]
    VanishingLink {
        kx: f64,
        ky: f64,
        band: usize,
        overlap: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
