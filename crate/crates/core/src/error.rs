use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inconsistent geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown vehicle {0}")]
    UnknownVehicle(u64),

    #[error("non-positive gap {0} m passed to car-following model")]
    NonPositiveGap(f64),

    #[error("gridlock watchdog: mean network speed below {threshold} m/s for {duration} s (t = {time:.1} s)")]
    Gridlock { time: f64, duration: f64, threshold: f64 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("insufficient vehicles: need {needed}, only {available} usable traces")]
    InsufficientVehicles { needed: usize, available: usize },

    #[error("trace too short: {len} samples, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },

    #[error("wrong input length: expected {expected}, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("no vehicle spent at least {min_presence} s in the window [{t0}, {t1}]")]
    EmptyWindow { t0: f64, t1: f64, min_presence: f64 },

    #[error("speeds must be positive (got {0} m/s)")]
    NonPositiveSpeed(f64),

    #[error("anomaly-score channel requested without scores")]
    MissingScores,

    #[error("GPS rate {rate} Hz is incompatible with record interval {interval} s")]
    IncompatibleRate { rate: f64, interval: f64 },

    #[error("window [{t0:.3}, {t1:.3}] lies outside the log span [{start:.3}, {end:.3}]")]
    WindowOutOfRange { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("training log spans {windows} windows, need at least {needed}")]
    InsufficientTrainingSpan { windows: usize, needed: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("missing model file {0}")]
    MissingModel(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that abort a run after it started (watchdog, divergence).
    pub fn is_runtime_abort(&self) -> bool {
        matches!(self, Error::Gridlock { .. } | Error::Divergence { .. })
    }
}
