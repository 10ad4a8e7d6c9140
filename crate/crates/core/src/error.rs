use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("gradient output must be a scalar, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("{op} evaluated outside its domain")]
    Domain { op: &'static str },

    #[error("calibration objective is flat (value {objective}); parameters are not identifiable")]
    DegenerateCalibration { objective: f64 },

    #[error("model has no fitted normalizer")]
    UnfittedNormalizer,

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("controller returned non-finite acceleration at step {step}")]
    NonFiniteAccel { step: usize },

    #[error("rollout crashed at t = {time:.1} s")]
    Crashed { time: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running a valid job.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Shape { .. } | Error::UnfittedNormalizer
        )
    }
}
