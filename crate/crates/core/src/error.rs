use thiserror::Error;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaserError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("truncation overflow: clipped mass {clipped:.3e} exceeds {limit:.3e}")]
    TruncationOverflow { clipped: f64, limit: f64 },

    #[error("steady-state tail above {tail_tol:.1e} at photon-number cap {cap}")]
    NonConvergentTruncation { cap: usize, tail_tol: f64 },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integrand has not decayed by horizon t = {horizon:.3e}")]
    NonDecayingTail { horizon: f64 },

    #[error("time integration ({time_integration:.12e}) and direct solve ({direct:.12e}) disagree, relative {relative:.3e}")]
    CrossCheckMismatch {
        time_integration: f64,
        direct: f64,
        relative: f64,
    },

    #[error("singular resolvent: {0}")]
    SingularResolvent(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("insufficient data for {observable}: {got} events, need {needed}")]
    InsufficientData {
        observable: String,
        got: usize,
        needed: usize,
    },

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MaserError>;
