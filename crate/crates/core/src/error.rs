use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape { what: String, expected: usize, found: usize },

    #[error("trajectory violates the {0} invariant")]
    Invariant(&'static str),

    #[error("weight evaluated outside the open time window: |t| = {t} >= T = {horizon}")]
    OutsideWindow { t: f64, horizon: f64 },

    #[error("step matrix is near-singular (time index {step}, pivot {pivot:e})")]
    SingularStep { step: usize, pivot: f64 },

    #[error("non-finite value in the solution at time index {step}")]
    NonFinite { step: usize },

    #[error("extension precondition violated: |{part} at t = 0| = {measured:e} exceeds {allowed:e}")]
    Extension { part: &'static str, measured: f64, allowed: f64 },

    #[error("conjugate gradient breakdown after restart at iteration {iteration}")]
    CgBreakdown { iteration: usize },

    #[error("initial datum violates positivity: |y0| = {value:e} < r0 = {r0:e} at node {node}")]
    Positivity { node: usize, value: f64, r0: f64 },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
