use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and dataset pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("defect placement: {0}")]
    Placement(String),

    #[error("configuration: {0}")]
    Configuration(String),

    #[error("numerical instability at step {step}: {detail}")]
    NumericalInstability { step: u64, detail: String },

    #[error("no arrival: trace is identically zero")]
    NoArrival,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("location {location}: {source}")]
    Location {
        location: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, unwrapping per-location context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Location { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_instability(&self) -> bool {
        matches!(self.root(), Error::NumericalInstability { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self.root(),
            Error::Io { .. } | Error::Image { .. } | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
