use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("t={time} is outside the evaluable domain [{min}, {max}]")]
    OutOfDomain { time: f64, min: f64, max: f64 },

    #[error("lag sigma={sigma} at t={time} reaches t={lagged}, before the history start {min}")]
    LagOutOfDomain {
        sigma: f64,
        time: f64,
        lagged: f64,
        min: f64,
    },

    #[error("history too short: {required} days before t0 required, {available} available")]
    InsufficientHistory { required: usize, available: usize },

    #[error("step size underflow at t={time} (h={step:e}); stiff system or unresolved discontinuity")]
    StepUnderflow { time: f64, step: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("relative error undefined: measured series has zero norm")]
    ZeroNorm,

    #[error("sampling {parameter}: 100 consecutive non-positive draws")]
    SamplingExhausted { parameter: &'static str },

    #[error("no successful runs to aggregate")]
    NoSuccessfulRuns,

    #[error("{failed} of {total} ensemble runs failed (limit 20%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("gradient probe {probe} failed: {source}")]
    Probe { probe: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
