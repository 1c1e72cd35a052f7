use thiserror::Error;

/// Errors raised while building scenes, assembling operators or time stepping.
#[derive(Debug, Error)]
pub enum EmiError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("target point lies on the source curve between collocation nodes (index {0})")]
    TargetOnCurve(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular system: {what} (growth estimate {estimate:.3e})")]
    Singular { what: String, estimate: f64 },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("stabilized step failed at stage {stage}: {reason}")]
    StepFailure { stage: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmiError> = std::result::Result<T, E>;
