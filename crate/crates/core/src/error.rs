use std::path::PathBuf;

/// Errors raised across the calibration pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient samples: {available} available, {required} required")]
    InsufficientSamples { available: usize, required: usize },

    #[error("non-finite value in feature {index}")]
    NonFiniteFeature { index: usize },

    #[error("empty feature database")]
    EmptyDatabase,

    #[error(
        "no features passed the score gate (tau = {tau}); lower the threshold or check the domain"
    )]
    ZeroFeatures { tau: f64 },

    #[error("unknown frame {0}")]
    UnknownFrame(usize),

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("linear sweep on axis {axis}: every grid point produced an empty target database")]
    SweepExhausted { axis: char },

    #[error("differential evolution: every initial member produced an empty target database")]
    NoViableCandidate,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
