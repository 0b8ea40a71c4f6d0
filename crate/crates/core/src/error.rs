use thiserror::Error;

/// Errors raised by the simulation and diagnostics layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular point: kernel evaluated at |x| = 0")]
    SingularPoint,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("configuration left R^dN \\ diagonal: particles {i} and {j} coincide")]
    Collision { i: usize, j: usize },

    #[error(
        "ladder underflow at level {level} (delta = {delta:e}); increase lambda or epsilon"
    )]
    LadderUnderflow { level: usize, delta: f64 },

    #[error("adaptive step underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("minimum separation {separation:e} fell below floor {floor:e} at t = {t}")]
    SeparationFloor { t: f64, separation: f64, floor: f64 },

    #[error("density support reached the guard shell at t = {t}; enlarge box")]
    EnlargeBox { t: f64 },

    #[error("mass mismatch: {lhs} vs {rhs}")]
    MassMismatch { lhs: f64, rhs: f64 },

    #[error("densities coincide (H^-1 distance {distance:e})")]
    DensitiesCoincide { distance: f64 },

    #[error("particle {index} lies outside the grid box")]
    OutsideBox { index: usize },

    #[error("transport cost guard exceeded: {cells} cells x {particles} particles > {limit}; use sliced mode")]
    CostGuard { cells: usize, particles: usize, limit: usize },

    #[error("sampling: duplicate re-draw budget exhausted after {attempts} attempts")]
    SamplingBudget { attempts: usize },

    #[error("unpadded transform requested: padded size {padded} < 2 x {n}")]
    Unpadded { padded: usize, n: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("kernel certification failed: {0}")]
    Certification(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::Certification(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag used in the JSON error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularPoint => "singular_point",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Collision { .. } => "collision",
            Error::LadderUnderflow { .. } => "ladder_underflow",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::SeparationFloor { .. } => "separation_floor",
            Error::EnlargeBox { .. } => "enlarge_box",
            Error::MassMismatch { .. } => "mass_mismatch",
            Error::DensitiesCoincide { .. } => "densities_coincide",
            Error::OutsideBox { .. } => "outside_box",
            Error::CostGuard { .. } => "cost_guard",
            Error::SamplingBudget { .. } => "sampling_budget",
            Error::Unpadded { .. } => "unpadded",
            Error::Numerical(_) => "numerical",
            Error::Certification(_) => "certification",
            Error::Config { .. } => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
