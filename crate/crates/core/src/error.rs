use std::path::PathBuf;

use crate::genome::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid genome: {}", format_violations(.0))]
    InvalidGenome(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("network construction failed: {0}")]
    Construction(String),

    #[error("backward called without a cached forward pass")]
    NoForwardCache,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("classifier output for sample {sample} sums to {sum}, expected 1")]
    NotNormalized { sample: usize, sum: f64 },

    #[error("discriminator {0} has no pairings")]
    Unpaired(u64),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
