use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("interval endpoints must be finite")]
    NonFinite,
    #[error("interval start {start} is negative")]
    Negative { start: f64 },
    #[error("interval end {end} precedes start {start}")]
    Reversed { start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("malformed interval {text:?}")]
    MalformedInterval { text: String },
    #[error("trace does not satisfy the output template and cannot be rendered")]
    NotRenderable,
    #[error("think text holds {found} timestamp blocks but the trace carries {expected} anchors")]
    AnchorMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("union of {pred} and {gt} has length {union} (<= 1e-9)")]
    DegenerateUnion {
        pred: String,
        gt: String,
        union: f64,
    },
    #[error("anchor list is empty")]
    EmptyAnchors,
    #[error("reward configuration field {field} must be finite")]
    InvalidConfig { field: &'static str },
}

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("group of size {0} is too small; at least 2 rollouts are required")]
    GroupTooSmall(usize),
    #[error("reference assigns zero probability to cell {cell} where the policy has mass {mass}")]
    SupportMismatch { cell: usize, mass: f64 },
    #[error("policy shapes differ: {left} vs {right} cells")]
    ShapeMismatch { left: usize, right: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("task list is empty")]
    EmptyTasks,
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction/ground-truth pairs to evaluate")]
    EmptyInput,
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("record {index} is not accepted and cannot be exported")]
    NotAccepted { index: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }
}
