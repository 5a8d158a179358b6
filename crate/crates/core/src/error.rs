use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subsystem index {index} out of range (layout has {count} subsystems)")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("invalid subsystem set: {0}")]
    InvalidSubsystemSet(String),

    #[error("fock cutoff must be at least {min}, got {got}")]
    CutoffTooSmall { min: usize, got: usize },

    #[error("truncation safety violated: |amplitude|^2 = {intensity:.4} exceeds cutoff/4 = {limit:.4}")]
    TruncationUnsafe { intensity: f64, limit: f64 },

    #[error("Fock truncation leakage {leakage:.3e} exceeds 1e-8 at t = {time}")]
    TruncationLeak { leakage: f64, time: f64 },

    #[error("empty qubit subset")]
    EmptySubset,

    #[error("layout has no detector")]
    NoDetector,

    #[error("layout has a detector but the effective model was requested")]
    DetectorPresent,

    #[error("state is not normalized (norm = {0})")]
    Unnormalized(f64),

    #[error("step-size guard violated: {0}")]
    StepGuard(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("jump from a state with zero norm under the collapse operator")]
    ZeroNormJump,

    #[error("zero-norm parity branch")]
    ZeroBranch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undersampled series: {0}")]
    Undersampled(String),

    #[error("mismatched configurations: {0}")]
    MismatchedConfig(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
