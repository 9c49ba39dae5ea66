use lmac_autograd::{Scalar, Tensor};

use crate::clip::SAMPLE_RATE;
use crate::error::{AudioError, Result};
use crate::stft::{Spectrogram, StftParams};

/// Added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelParams {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_mels: 40,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Log-mel features `[Fmel, T]`.
#[derive(Debug, Clone)]
pub struct MelFeatures {
    pub values: Tensor<f32>,
    pub params: MelParams,
}

/// Triangular HTK-scale filters with unit peaks, `[n_mels, n_fft / 2 + 1]`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    params: MelParams,
    bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(params: MelParams, stft: &StftParams) -> Result<Self> {
        let bins = stft.bins();
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if params.fmax > nyquist {
            return Err(AudioError::MelConfig(format!("fmax {} above Nyquist {nyquist}", params.fmax)));
        }
        if params.fmin < 0.0 || params.fmin >= params.fmax {
            return Err(AudioError::MelConfig(format!("bad band [{}, {}]", params.fmin, params.fmax)));
        }
        if params.n_mels == 0 || params.n_mels >= bins {
            return Err(AudioError::MelConfig(format!("{} mels for {bins} bins", params.n_mels)));
        }
        let (lo, hi) = (hz_to_mel(params.fmin), hz_to_mel(params.fmax));
        let edges: Vec<f64> = (0..params.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (params.n_mels + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / stft.n_fft as f64;
        let mut weights = vec![0.0; params.n_mels * bins];
        for m in 0..params.n_mels {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
                weights[m * bins + k] = w;
            }
        }
        Ok(Self { params, bins, weights })
    }

    pub fn params(&self) -> MelParams {
        self.params
    }

    pub fn n_mels(&self) -> usize {
        self.params.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tensor<E: Scalar>(&self) -> Tensor<E> {
        Tensor::new(self.weights.iter().map(|&w| E::of(w)).collect(), &[self.params.n_mels, self.bins])
            .expect("filterbank shape")
    }

    /// Differentiable `log(W · |X|^2 + floor)` over a batch of magnitudes
    /// `[B, F, T]`, giving `[B, Fmel, T]`.
    pub fn log_mel<E: Scalar>(&self, magnitude: &Tensor<E>) -> lmac_autograd::Result<Tensor<E>> {
        self.tensor::<E>()
            .matmul_batched(&magnitude.square()?)?
            .add_scalar(E::of(LOG_FLOOR))?
            .log()
    }

    /// `Wᵀ · A` for a mel-domain map `[Fmel, T]`, spreading it over linear
    /// frequency bins `[F, T]`.
    pub fn spread_to_linear(&self, mel_map: &[f32], frames: usize) -> Vec<f32> {
        let mut out = vec![0f32; self.bins * frames];
        for m in 0..self.params.n_mels {
            for k in 0..self.bins {
                let w = self.weights[m * self.bins + k];
                if w == 0.0 {
                    continue;
                }
                for t in 0..frames {
                    out[k * frames + t] += (w * mel_map[m * frames + t] as f64) as f32;
                }
            }
        }
        out
    }

    /// Filter-weighted average of a linear-frequency map `[F, T]` per mel
    /// band, giving `[Fmel, T]`. Maps values in `[0, 1]` into `[0, 1]`.
    pub fn average_to_mel(&self, linear_map: &[f32], frames: usize) -> Vec<f32> {
        let mut out = vec![0f32; self.params.n_mels * frames];
        for m in 0..self.params.n_mels {
            let row = &self.weights[m * self.bins..(m + 1) * self.bins];
            let total: f64 = row.iter().sum();
            for t in 0..frames {
                let s: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(k, &w)| w * linear_map[k * frames + t] as f64)
                    .sum();
                out[m * frames + t] = (s / total) as f32;
            }
        }
        out
    }
}

/// Log-mel features of one spectrogram.
pub fn mel_features(spec: &Spectrogram, filterbank: &MelFilterbank) -> Result<MelFeatures> {
    if spec.bins() != filterbank.bins() {
        return Err(AudioError::ShapeMismatch {
            expected: vec![filterbank.bins(), spec.frames()],
            got: spec.magnitude.shape().to_vec(),
        });
    }
    let batch = spec.magnitude.reshape(&[1, spec.bins(), spec.frames()])?;
    let values = filterbank.log_mel(&batch)?.reshape(&[filterbank.n_mels(), spec.frames()])?;
    Ok(MelFeatures {
        values,
        params: filterbank.params(),
    })
}
