//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is numerically singular at {point:?} (condition estimate {cond:.3e})")]
    DegenerateMetric { point: Vec<f64>, cond: f64 },

    #[error("frame is not orthonormal: max deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NonOrthonormalFrame { deviation: f64, tolerance: f64 },

    #[error("critical point of the level function: |grad u| = {grad_norm:.3e} below floor {floor:.3e}")]
    CriticalPoint { grad_norm: f64, floor: f64 },

    #[error("finite-difference stencil of step {step:.3e} leaves the chart domain at {point:?}")]
    DomainMargin { point: Vec<f64>, step: f64 },

    #[error("finite-difference step {step:.3e} underflows the domain scale {scale:.3e}")]
    StepSize { step: f64, scale: f64 },

    #[error("expected a tuple of {expected} vectors, got {got}")]
    TupleLength { expected: usize, got: usize },

    #[error("slot {slot} is out of range for a sequence of length {len}")]
    InvalidSlot { slot: usize, len: usize },

    #[error("degenerate level-surface parametrization at parameters {params:?}")]
    Parametrization { params: Vec<f64> },

    #[error("level solve did not converge at parameters {params:?} (residual {residual:.3e})")]
    LevelSolve { params: Vec<f64>, residual: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
