use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward requires a traced scalar loss")]
    Untraced,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cholesky factorization failed (last jitter {jitter:e})")]
    Factorization { jitter: f64 },
    #[error("white-noise covariance is not trace-class; enable allow_white_noise for finite-dimensional checks")]
    WhiteNoiseRejected,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("ode solver exceeded {0} steps")]
    MaxStepsExceeded(usize),
    #[error("ode solver step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("zero variance at grid index {index}; statistic undefined")]
    ZeroVariance { index: usize },
    #[error("not enough samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training diverged at step {step} (seed {seed}): non-finite loss or gradient")]
    TrainingDiverged { step: usize, seed: u64 },
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by NaN/Inf or an unstable integration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Factorization { .. }
                | Error::MaxStepsExceeded(_)
                | Error::StepSizeUnderflow(_)
                | Error::TrainingDiverged { .. }
        )
    }
}
