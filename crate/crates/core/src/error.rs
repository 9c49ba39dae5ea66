use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] lmac_autograd::AutogradError),
    #[error(transparent)]
    Audio(#[from] lmac_audio::AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: empty input set")]
    Empty(&'static str),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },
    #[error("all-zero attribution")]
    ZeroAttribution,
}

impl CoreError {
    /// Numeric failures (NaN/Inf) as opposed to usage or I/O errors.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::Diverged { .. } | CoreError::Tensor(lmac_autograd::AutogradError::NonFinite { .. })
        )
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
