//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid step plan: {0}")]
    StepPlan(String),

    #[error("grid dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch {
        expected: crate::grid::GridDims,
        got: crate::grid::GridDims,
    },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid scene spec: {0}")]
    Scene(String),

    #[error("unknown condition: {0}")]
    UnknownCondition(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("separation failed: {0}")]
    Separation(String),

    #[error("metric error: {0}")]
    Metric(String),
}
