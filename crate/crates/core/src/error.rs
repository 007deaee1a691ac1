use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero mode: the mean mode (0,0) is excluded from H")]
    ZeroMode,

    #[error("fields live on different bases")]
    BasisMismatch,

    #[error("mode index {index} out of range for basis of dimension {dim}")]
    ModeIndex { index: usize, dim: usize },

    #[error("invalid interval: a = {a} must satisfy 0 <= a <= b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("infinite mass: measure of the requested region is not finite")]
    InfiniteMass,

    #[error("family inadmissible for this measure: {0}")]
    InadmissibleFamily(String),

    #[error("activity not finite; raise cutoff")]
    InfiniteActivity,

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error {error:e} after {evals} evaluations"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        evals: usize,
    },

    #[error("blow-up: non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("event list does not match the path: {0}")]
    EventMismatch(String),

    #[error("insufficient paths: need at least {needed}, got {got}")]
    InsufficientPaths { needed: usize, got: usize },

    #[error("nonconforming kernel: {0}")]
    Nonconforming(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
