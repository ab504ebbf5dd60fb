use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] disoul_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown sweep parameter `{0}` (expected one of e_n0, bandwidth, antennas, ray_arrival, calibration)")]
    UnknownParameter(String),
    #[error("invalid value list `{0}`: expected `start:step:stop` or comma-separated numbers")]
    InvalidValues(String),
    #[error("reference solver: {0}")]
    Reference(String),
    #[error("could not draw a source outside every array's near field after {0} attempts")]
    SourcePlacement(usize),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    /// Whether the failure stems from user input rather than a run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownParameter(_) | Error::InvalidValues(_)
        )
    }
}
