use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("undefined bearing: point coincides with the array center")]
    UndefinedBearing,
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("observation window too short: need {required} s, have {available} s")]
    ObservationTooShort { required: f64, available: f64 },
    #[error("time {0} s lies outside the matched-filter trace")]
    TimeOutOfRange(f64),
    #[error("no sample reaches the detection threshold")]
    NoDetection,
    #[error("false-alarm probability {0} is unattainable under the selected model")]
    UnattainableFalseAlarm(f64),
    #[error("station has no line-of-sight component")]
    NoLineOfSight,
    #[error("singular geometry: {0}")]
    SingularGeometry(&'static str),
    #[error("sparse solver stopped without certificate (relative gap {gap:e} after {epochs} epochs, {subproblems} subproblems)")]
    NoCertificate { gap: f64, epochs: usize, subproblems: usize },
    #[error("only {detected} station(s) detected the source; at least 2 are required")]
    InsufficientDetections { detected: usize },
    #[error("empty grid")]
    EmptyGrid,
}
