use thiserror::Error;

use crate::codec::CodecError;
use crate::detectors::DetectorError;
use crate::metrics::MetricsError;
use crate::model::ValidationErrors;
use crate::sim::SimError;
use crate::sorter::SortError;
use crate::tracking::TrackError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("IO: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, e.g. `BAD_CHECKSUM`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "VALIDATION",
            Error::Codec(e) => e.code(),
            Error::Detector(e) => e.code(),
            Error::Metrics(e) => e.code(),
            Error::Sort(e) => e.code(),
            Error::Sim(e) => e.code(),
            Error::Track(e) => e.code(),
            Error::Io(_) => "IO",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
