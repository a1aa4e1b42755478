use thiserror::Error;

pub use crate::autodiff::AdError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("moduli must be positive (kappa = {kappa}, mu = {mu})")]
    NonPositiveModulus { kappa: f64, mu: f64 },
    #[error("damage saturated (omega = {omega})")]
    DamageSaturated { omega: f64 },
    #[error("flow direction undefined: |eta| = {norm} is below {tol}")]
    DegenerateStressState { norm: f64, tol: f64 },
    #[error("plastic multiplier denominator is {value}")]
    NonPositiveDenominator { value: f64 },

    #[error("loading program has no segments")]
    EmptyProgram,
    #[error("invalid loading program: {0}")]
    InvalidProgram(String),
    #[error("time {t} outside program range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("invalid state of stress at t = {t}: F = {f} exceeds {tol}")]
    InvalidStressState { t: f64, f: f64, tol: f64 },
    #[error("mixed-control solve did not converge at t = {t} (residual {residual})")]
    ControlSolveFailure { t: f64, residual: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: String, found: String },

    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("incomplete residual context: {0}")]
    IncompleteContext(String),

    #[error("non-finite gradient at epoch {epoch} (loss terms: {terms})")]
    NonFiniteGradient { epoch: usize, terms: String },
    #[error("training diverged at epoch {epoch}: loss {loss} vs initial {initial}")]
    Diverged {
        epoch: usize,
        loss: f64,
        initial: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or state).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DamageSaturated { .. }
                | Error::DegenerateStressState { .. }
                | Error::NonPositiveDenominator { .. }
                | Error::InvalidStressState { .. }
                | Error::ControlSolveFailure { .. }
                | Error::StepUnderflow { .. }
                | Error::Ad(_)
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
        )
    }

    /// True when persisted state does not match what the caller expects.
    pub fn is_state_mismatch(&self) -> bool {
        matches!(
            self,
            Error::SpecMismatch(_)
                | Error::CorruptCheckpoint(_)
                | Error::SchemaVersionMismatch { .. }
        )
    }
}
