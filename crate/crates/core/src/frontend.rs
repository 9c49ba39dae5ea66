use lmac_audio::{stft, AudioClip, MelFilterbank, MelParams, Spectrogram, StftParams};
use lmac_autograd::Tensor;

use crate::error::Result;

/// STFT analysis plus the log-mel projection the classifier consumes.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub stft: StftParams,
    pub filterbank: MelFilterbank,
}

impl Default for Frontend {
    fn default() -> Self {
        Self::new(StftParams::default(), MelParams::default()).expect("default front end is valid")
    }
}

impl Frontend {
    pub fn new(stft: StftParams, mel: MelParams) -> Result<Self> {
        Ok(Self {
            filterbank: MelFilterbank::new(mel, &stft)?,
            stft,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.filterbank.n_mels()
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    pub fn analyze(&self, samples: &[f32]) -> Result<Spectrogram> {
        Ok(stft(&AudioClip::new(samples.to_vec()), &self.stft)?)
    }

    /// Log-mel features of magnitudes `[B, F, T]`, shaped `[B, 1, Fmel, T]`
    /// for the classifier.
    pub fn features(&self, magnitudes: &Tensor<f32>) -> Result<Tensor<f32>> {
        let &[b, _, t] = magnitudes.shape() else {
            return Err(crate::CoreError::Shape {
                expected: vec![0, self.bins(), 0],
                got: magnitudes.shape().to_vec(),
            });
        };
        Ok(self.filterbank.log_mel(magnitudes)?.reshape(&[b, 1, self.n_mels(), t])?)
    }

    /// Mel power `W · |X|^2` of one magnitude `[F, T]`, giving `[Fmel, T]`.
    /// Same arithmetic as the classifier's features before the logarithm.
    pub fn mel_power(&self, magnitude: &[f32], frames: usize) -> Result<Vec<f32>> {
        let x = Tensor::new(magnitude.to_vec(), &[1, self.bins(), frames])?;
        Ok(self.filterbank.tensor::<f32>().matmul_batched(&x.square()?)?.to_vec())
    }
}

/// Stacks equally shaped `[F, T]` slices into one `[B, F, T]` tensor.
pub fn stack(items: &[&[f32]], rows: usize, cols: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(items.len() * rows * cols);
    for it in items {
        if it.len() != rows * cols {
            return Err(crate::CoreError::Shape {
                expected: vec![rows, cols],
                got: vec![it.len()],
            });
        }
        data.extend_from_slice(it);
    }
    Ok(Tensor::new(data, &[items.len(), rows, cols])?)
}
