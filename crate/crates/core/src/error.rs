use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Every variant has a stable class name (see [`Error::class`]) that the
/// command-line frontend prints as the machine-readable error kind.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected {expected} coordinates, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("point is not on the variety (defect {defect})")]
    NotOnVariety { defect: String },
    #[error("move {index} produced a non-positive coordinate")]
    NonPositiveResult { index: usize },
    #[error("coordinate quadratic has no real root (discriminant {discriminant})")]
    NoRealSolution { discriminant: String },
    #[error("letter {letter} outside 1..={n}")]
    LetterOutOfRange { letter: usize, n: usize },
    #[error("coordinate must be positive: {0}")]
    NonPositiveCoordinate(String),
    #[error("length must be positive: {0}")]
    NonPositiveLength(f64),
    #[error("invalid variety parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),

    #[error("error bound {bound:e} exceeds budget {budget:e}")]
    ErrorBudgetExceeded { bound: f64, budget: f64 },
    #[error("move {index} is not outgoing for this point")]
    NotOutgoing { index: usize },
    #[error("move {index} is not a descending move for this point")]
    NotDescending { index: usize },

    #[error("depth cap {cap} reached")]
    DepthCapHit { cap: usize },
    #[error("checkpoint digest mismatch ({which})")]
    DigestMismatch { which: &'static str },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("visitor aborted traversal after {visited} nodes: {message}")]
    VisitorAborted { visited: u64, message: String },
    #[error("comparison could not be certified at {bits} bits")]
    Undecidable { bits: u32 },

    #[error("descent did not terminate within {steps} steps")]
    NonTermination { steps: usize },
    #[error("enumerated ball is empty")]
    EmptyBall,

    #[error("series needs at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("fit range is degenerate")]
    DegenerateRange,
    #[error("series invariant violated: {0}")]
    InvalidSeries(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotOnVariety { .. } => "NotOnVariety",
            Error::NonPositiveResult { .. } => "NonPositiveResult",
            Error::NoRealSolution { .. } => "NoRealSolution",
            Error::LetterOutOfRange { .. } => "LetterOutOfRange",
            Error::NonPositiveCoordinate(_) => "NonPositiveCoordinate",
            Error::NonPositiveLength(_) => "NonPositiveLength",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse(_) => "ParseError",
            Error::ErrorBudgetExceeded { .. } => "ErrorBudgetExceeded",
            Error::NotOutgoing { .. } => "NotOutgoing",
            Error::NotDescending { .. } => "NotDescending",
            Error::DepthCapHit { .. } => "DepthCapHit",
            Error::DigestMismatch { .. } => "DigestMismatch",
            Error::CorruptCheckpoint(_) => "CorruptCheckpoint",
            Error::VisitorAborted { .. } => "VisitorAborted",
            Error::Undecidable { .. } => "Undecidable",
            Error::NonTermination { .. } => "NonTermination",
            Error::EmptyBall => "EmptyBall",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DegenerateRange => "DegenerateRange",
            Error::InvalidSeries(_) => "InvalidSeries",
            Error::Io(_) => "IoError",
        }
    }

    /// True for errors caused by malformed input rather than by a failed run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::LetterOutOfRange { .. }
                | Error::InvalidParams(_)
                | Error::InvalidArgument(_)
                | Error::Parse(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
