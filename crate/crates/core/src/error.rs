//! Crate-wide error type.
//!
//! Every fallible public operation returns [`crate::Result`]. Variants carry
//! enough context to be actionable without backtraces; IO and JSON errors keep
//! their source chained for `std::error::Error::source`.

use std::fmt;
use std::path::PathBuf;

/// Errors produced by space construction, oracles, models, and the harness.
#[derive(Debug)]
pub enum Error {
    /// A knob definition is unusable (empty menu, duplicate values, ...).
    InvalidKnob { name: String, reason: String },
    /// A linear index does not address a point of the space.
    IndexOutOfRange { index: usize, size: usize },
    /// A coordinate vector does not address a point of the space.
    InvalidCoords { reason: String },
    /// A configuration's values do not resolve against the space's knobs.
    ConfigNotInSpace { reason: String },
    /// Two vectors that must have equal length do not.
    LengthMismatch { context: &'static str, expected: usize, actual: usize },
    /// A workload shape produces an empty output tensor.
    EmptyOutput { workload: String, out_h: i64, out_w: i64 },
    /// Exhaustive measurement was requested for a space above the size cap.
    ExhaustiveBudgetExceeded { size: usize, limit: usize },
    /// A ground-truth table does not belong to (or cover) the given space.
    TruthMismatch { reason: String },
    /// A model was asked to fit zero rows.
    EmptyTrainingSet,
    /// A cutoff `n` for a ranking metric is outside `1..=len`.
    RankCutoffOutOfRange { n: usize, len: usize },
    /// The ideal ranking has zero gain, so nDCG is undefined.
    DegenerateRanking,
    /// An operation that needs at least one element received none.
    EmptyInput { what: &'static str },
    /// A controlled-ratio study cell asks for more points than are available.
    UnrealizableRatio { ratio: f64, needed: usize, available: usize },
    /// A parameter value violates its documented range.
    InvalidParam { name: &'static str, reason: String },
    /// Enhanced-mode tuning was started without a presample set.
    MissingPresample,
    /// A manifest, log, or report file violates its schema.
    Schema { path: PathBuf, reason: String },
    /// Filesystem failure, annotated with the path involved.
    Io { path: PathBuf, source: std::io::Error },
    /// JSON (de)serialization failure, annotated with the path involved.
    Json { path: PathBuf, source: serde_json::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidKnob { name, reason } => {
                write!(f, "invalid knob `{name}`: {reason}")
            }
            Error::IndexOutOfRange { index, size } => {
                write!(f, "linear index {index} out of range for space of size {size}")
            }
            Error::InvalidCoords { reason } => write!(f, "invalid coordinates: {reason}"),
            Error::ConfigNotInSpace { reason } => {
                write!(f, "configuration not in space: {reason}")
            }
            Error::LengthMismatch { context, expected, actual } => {
                write!(f, "{context}: length mismatch (expected {expected}, got {actual})")
            }
            Error::EmptyOutput { workload, out_h, out_w } => {
                write!(f, "workload {workload} has empty output ({out_h}x{out_w})")
            }
            Error::ExhaustiveBudgetExceeded { size, limit } => {
                write!(f, "space size {size} exceeds exhaustive-measurement cap {limit}")
            }
            Error::TruthMismatch { reason } => write!(f, "ground-truth mismatch: {reason}"),
            Error::EmptyTrainingSet => write!(f, "training set is empty"),
            Error::RankCutoffOutOfRange { n, len } => {
                write!(f, "rank cutoff {n} out of range for list of {len} items")
            }
            Error::DegenerateRanking => {
                write!(f, "all measured values are zero; ideal DCG is undefined")
            }
            Error::EmptyInput { what } => write!(f, "{what} must not be empty"),
            Error::UnrealizableRatio { ratio, needed, available } => {
                write!(
                    f,
                    "valid ratio {ratio} needs {needed} points but only {available} are available"
                )
            }
            Error::InvalidParam { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::MissingPresample => {
                write!(f, "enhanced mode requires a presample set")
            }
            Error::Schema { path, reason } => {
                write!(f, "schema violation in {}: {reason}", path.display())
            }
            Error::Io { path, source } => {
                write!(f, "io error at {}: {source}", path.display())
            }
            Error::Json { path, source } => {
                write!(f, "json error at {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Json { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Convenience constructor for IO errors tied to a path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Convenience constructor for JSON errors tied to a path.
    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
