use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {point:?} is not inside the open domain {bounds:?}")]
    ParameterOutOfDomain {
        point: Vec<f64>,
        bounds: Vec<(f64, f64)>,
    },

    #[error("invalid family configuration: {0}")]
    InvalidFamilyConfig(String),

    #[error("invalid diffusion: {0}")]
    InvalidDiffusion(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFiniteState { step: usize, time: f64 },

    #[error("information matrix is singular or not positive semi-definite: {0}")]
    SingularInformation(String),

    #[error("objective is constant over the search grid")]
    DegenerateObjective,

    #[error("no dyadic cube of level {level} fits inside the domain along axis {axis}")]
    NoInteriorCube { level: u32, axis: usize },

    #[error("derivative curves are linearly dependent: {0}")]
    LinearlyDependentDerivatives(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("path format error: {0}")]
    PathFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{failed} of {total} replicates failed, above the 1% abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterOutOfDomain { .. } => "ParameterOutOfDomain",
            Error::InvalidFamilyConfig(_) => "InvalidFamilyConfig",
            Error::InvalidDiffusion(_) => "InvalidDiffusion",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::SingularInformation(_) => "SingularInformation",
            Error::DegenerateObjective => "DegenerateObjective",
            Error::NoInteriorCube { .. } => "NoInteriorCube",
            Error::LinearlyDependentDerivatives(_) => "LinearlyDependentDerivatives",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::PathFormat(_) => "PathFormat",
            Error::Config(_) => "Config",
            Error::TooManyFailures { .. } => "TooManyFailures",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
