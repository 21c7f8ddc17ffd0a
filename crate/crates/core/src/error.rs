use thiserror::Error;

/// Errors raised by the tabular IRL toolkit.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of the inputs do not agree (trajectory vs MDP, table sizes, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An index lies outside the state or action range.
    #[error("{kind} index {index} out of range (size {size})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },
    /// A probability vector is negative, non-finite, or does not sum to one.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    /// The MDP violates one or more structural invariants.
    #[error("invalid MDP: {}", .0.join("; "))]
    InvalidMdp(Vec<String>),
    /// The requested computation is not defined for this configuration.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    /// The operation expects a different kind of MDP or planner mode.
    #[error("wrong mode: {0}")]
    WrongMode(String),
    /// A fixed-point iteration hit its iteration budget.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    /// Trajectory enumeration would exceed the configured cap.
    #[error("enumeration of ~{estimate:e} trajectories exceeds cap {cap:e}")]
    EnumerationCap { estimate: f64, cap: f64 },
    /// A proposal assigns zero probability to a trajectory that needs a weight.
    #[error("proposal has zero probability on trajectory {0}")]
    InvalidSupport(String),
    /// Every importance weight vanished.
    #[error("degenerate importance-sampling estimate: {0}")]
    DegenerateEstimate(String),
    /// Demonstration set has no trajectories.
    #[error("demonstration set is empty")]
    EmptyDemonstrations,
    /// Configuration values out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A file could not be read or written.
    #[error("i/o error: {0}")]
    Io(String),
    /// A file is not valid JSON or does not match the schema.
    #[error("parse error: {0}")]
    Parse(String),
    /// A loss or table became NaN or infinite.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
