use thiserror::Error;

/// Failures raised by the simulation and estimation routines.
///
/// Every variant maps to a short stable [`Error::code`] that sweep output uses
/// in its `error_code` column.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(&'static str),

    #[error("fault location is indeterminate (M = 0)")]
    IndeterminateLocation,

    #[error("singular attack: {0}")]
    SingularAttack(&'static str),

    #[error("all corridor lines are out of service at t = {time}")]
    Island { time: f64 },

    #[error("alignment conflict: device `{device}` reported twice near t = {timestamp}")]
    AlignmentConflict { device: String, timestamp: f64 },

    #[error("solver failed after {} iterations: {reason}", trace.len())]
    SolverFailure {
        reason: &'static str,
        /// Iterates `[x, y, t]` visited before the failure.
        trace: Vec<[f64; 3]>,
    },

    #[error("anchors are collinear; transformed frame is undefined")]
    FrameDegenerate,

    #[error("no real non-negative range solution (discriminant {discriminant:e})")]
    NoSolution { discriminant: f64 },

    #[error("sensitivity undefined: {0}")]
    SensitivityUndefined(&'static str),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DegenerateScenario(_) => "degenerate_scenario",
            Error::DegenerateMeasurement(_) => "degenerate_measurement",
            Error::IndeterminateLocation => "indeterminate_location",
            Error::SingularAttack(_) => "singular_attack",
            Error::Island { .. } => "island",
            Error::AlignmentConflict { .. } => "alignment_conflict",
            Error::SolverFailure { .. } => "solver_failure",
            Error::FrameDegenerate => "frame_degenerate",
            Error::NoSolution { .. } => "no_solution",
            Error::SensitivityUndefined(_) => "sensitivity_undefined",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
