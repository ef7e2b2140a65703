use std::path::PathBuf;

use thiserror::Error;

use crate::model::RegimeKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("regime {0} has no finite barrier constant")]
    UnsupportedRegime(RegimeKind),

    #[error("iteration {iteration} produced a non-finite value")]
    Divergence { iteration: usize },

    #[error("fit window ({d_min}, {d_max}) holds {found} usable points, need at least 3")]
    EmptyWindow { d_min: f64, d_max: f64, found: usize },

    #[error("log-log fit requires positive values, found {0}")]
    NonPositive(f64),

    #[error("unstable time step: dt * max|drift| = {step} exceeds {limit}")]
    Stability { step: f64, limit: f64 },

    #[error("field holds a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
