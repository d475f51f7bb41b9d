use thiserror::Error;

/// Errors raised by the simulation, training and diagnostic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("population too small: need at least {min} individuals, got {got}")]
    TooFewIndividuals { min: usize, got: usize },

    #[error("inadmissible individual {index}: {reason}")]
    Inadmissible { index: usize, reason: String },

    #[error("integration diverged at t = {t} (step {step}, individual {index}): {reason}")]
    Diverged {
        t: f64,
        step: usize,
        index: usize,
        reason: String,
    },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("arity mismatch: feature spec has arity {expected}, inputs imply {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("problem size {n} exceeds the configured cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
