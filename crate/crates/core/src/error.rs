use thiserror::Error;

use crate::domain::{ServerId, TaskId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty fleet")]
    EmptyFleet,
    #[error("utilization out of range: {0}")]
    UtilizationOutOfRange(f64),
    #[error("utilization lists differ in length ({cpu} cpu vs {ram} ram)")]
    LengthMismatch { cpu: usize, ram: usize },
    #[error("invalid size or frequency")]
    InvalidSizeOrFrequency,
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} is not placed")]
    Unplaced(TaskId),
    #[error("dependency unplaced: task {task} waits on {predecessor}")]
    DependencyUnplaced { task: TaskId, predecessor: TaskId },
    #[error("not a DAG")]
    NotADag,
    #[error("precedence violation: task {task} scheduled before {predecessor} completed")]
    PrecedenceViolation { task: TaskId, predecessor: TaskId },
    #[error("fleet exceeds capacity: {fleet} servers > max_servers {max}")]
    FleetExceedsCapacity { fleet: usize, max: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("invalid network model: {0}")]
    InvalidNetwork(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
