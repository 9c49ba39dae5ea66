use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("clip has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("hop {hop} with n_fft {n_fft} does not satisfy the overlap-add condition")]
    NonCola { n_fft: usize, hop: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("mask values must lie in [0, 1]")]
    MaskRange,
    #[error("invalid mel configuration: {0}")]
    MelConfig(String),
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u16),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("{0} has zero power")]
    ZeroPower(&'static str),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Tensor(#[from] lmac_autograd::AutogradError),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;
