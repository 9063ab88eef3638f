use thiserror::Error;

/// Errors raised by the simulator and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {family} potential evaluated at r = {value}")]
    Domain { family: &'static str, value: f64 },

    #[error("positivity violation at grid index {index} (s = {position:.6}): value {value:e}")]
    PositivityViolation {
        index: usize,
        position: f64,
        value: f64,
    },

    #[error("blow-up at step {step}: non-finite state")]
    BlowUp { step: u64 },

    #[error("boundary collapse at step {step}: L- = {l_minus}, L+ = {l_plus}")]
    BoundaryCollapse {
        step: u64,
        l_minus: f64,
        l_plus: f64,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("no stationary Gaussian reference: {0}")]
    NoStationaryMeasure(String),

    #[error("pCN tuning failure: acceptance rate {rate:.4} after tuning window")]
    TuningFailure { rate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
