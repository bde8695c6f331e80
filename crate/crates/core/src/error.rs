use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("window [{start}, {end}) holds {found} usable samples, need at least {needed}")]
    WindowTooSparse {
        start: f64,
        end: f64,
        found: usize,
        needed: usize,
    },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("monitor {monitor_id} has no voltage channel")]
    MissingVoltage { monitor_id: String },
    #[error("sample {index}: timestamp is not strictly increasing")]
    NonMonotonicTime { index: usize },
    #[error("sample {index}: timestamp is not finite")]
    NonFiniteTime { index: usize },
    #[error("|true RoCoF| = {true_rocof:e} Hz/s is below the floor {floor:e} Hz/s")]
    RocofBelowFloor { true_rocof: f64, floor: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("true inertia must be positive, got {0}")]
    NonPositiveTruth(f64),
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("analytic oracle restriction violated: {0}")]
    RestrictionViolated(String),
    #[error("plant {plant_id}: {found} usable records, need at least {needed}")]
    InsufficientRecords {
        plant_id: String,
        found: usize,
        needed: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
