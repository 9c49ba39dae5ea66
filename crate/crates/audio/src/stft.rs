use std::f64::consts::PI;

use lmac_autograd::Tensor;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::clip::{AudioClip, SAMPLE_RATE};
use crate::error::{AudioError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann.
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a centred analysis of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => (0..self.n_fft)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / self.n_fft as f64).cos())
                .collect(),
        }
    }

    /// Overlap-add with the squared Hann window sums to a constant only when
    /// the hop divides the frame into at least four parts.
    fn check_cola(&self) -> Result<()> {
        let ok = self.hop > 0 && self.n_fft % self.hop == 0 && self.n_fft / self.hop >= 4;
        if ok {
            Ok(())
        } else {
            Err(AudioError::NonCola {
                n_fft: self.n_fft,
                hop: self.hop,
            })
        }
    }
}

/// Magnitude/phase decomposition of a centred STFT, `[F, T]` each.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub magnitude: Tensor<f32>,
    pub phase: Tensor<f32>,
    pub params: StftParams,
    /// Length of the analysed waveform, restored by [`istft`].
    pub num_samples: usize,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.magnitude.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.magnitude.shape()[1]
    }

    /// Same phase, different magnitude.
    pub fn with_magnitude(&self, magnitude: Tensor<f32>) -> Result<Spectrogram> {
        if magnitude.shape() != self.magnitude.shape() {
            return Err(AudioError::ShapeMismatch {
                expected: self.magnitude.shape().to_vec(),
                got: magnitude.shape().to_vec(),
            });
        }
        Ok(Spectrogram {
            magnitude,
            ..self.clone()
        })
    }
}

fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut j = i;
    // Single reflection is enough: padding never exceeds the signal length.
    if j < 0 {
        j = -j;
    }
    if j >= n {
        j = 2 * (n - 1) - j;
    }
    j as usize
}

/// Hann-windowed STFT with frames centred on multiples of the hop (reflect
/// padding of `n_fft / 2` at both ends).
pub fn stft(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram> {
    let n_fft = params.n_fft;
    let len = clip.samples.len();
    if len < n_fft {
        return Err(AudioError::TooShort { len, needed: n_fft });
    }
    let window = params.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let (bins, frames) = (params.bins(), params.frames(len));
    let half = (n_fft / 2) as isize;
    let mut magnitude = vec![0f32; bins * frames];
    let mut phase = vec![0f32; bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        let start = (t * params.hop) as isize - half;
        for (n, slot) in buf.iter_mut().enumerate() {
            let s = clip.samples[reflect(start + n as isize, len)] as f64;
            *slot = Complex::new(s * window[n], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            let z = buf[k];
            magnitude[k * frames + t] = z.norm() as f32;
            phase[k * frames + t] = z.arg() as f32;
        }
    }
    Ok(Spectrogram {
        magnitude: Tensor::new(magnitude, &[bins, frames])?,
        phase: Tensor::new(phase, &[bins, frames])?,
        params: *params,
        num_samples: len,
    })
}

/// Inverse of [`stft`] by windowed overlap-add, normalised by the summed
/// squared window.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let params = spec.params;
    params.check_cola()?;
    let n_fft = params.n_fft;
    let (bins, frames) = (spec.bins(), spec.frames());
    if bins != params.bins() || spec.phase.shape() != spec.magnitude.shape() {
        return Err(AudioError::ShapeMismatch {
            expected: vec![params.bins(), frames],
            got: spec.magnitude.shape().to_vec(),
        });
    }
    let window = params.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let total = n_fft + params.hop * (frames - 1);
    let mut acc = vec![0f64; total];
    let mut norm = vec![0f64; total];
    let mag = spec.magnitude.data();
    let ph = spec.phase.data();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        for k in 0..bins {
            let (m, p) = (mag[k * frames + t] as f64, ph[k * frames + t] as f64);
            buf[k] = Complex::from_polar(m, p);
        }
        // Real signal: DC and Nyquist bins carry no imaginary part.
        buf[0].im = 0.0;
        buf[n_fft / 2].im = 0.0;
        for k in 1..n_fft / 2 {
            buf[n_fft - k] = buf[k].conj();
        }
        ifft.process(&mut buf);
        let off = t * params.hop;
        for n in 0..n_fft {
            acc[off + n] += buf[n].re / n_fft as f64 * window[n];
            norm[off + n] += window[n] * window[n];
        }
    }
    let half = n_fft / 2;
    let samples = (0..spec.num_samples)
        .map(|i| {
            let j = i + half;
            let (a, w) = (acc.get(j).copied().unwrap_or(0.0), norm.get(j).copied().unwrap_or(0.0));
            if w > 1e-10 {
                (a / w) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: SAMPLE_RATE,
        label: None,
        clean_reference: None,
    })
}

/// Listenable rendering of a mask: the masked magnitude resynthesised with
/// the phase of the original analysis.
pub fn synthesize_interpretation(mask: &Tensor<f32>, spec: &Spectrogram) -> Result<AudioClip> {
    if mask.shape() != spec.magnitude.shape() {
        return Err(AudioError::ShapeMismatch {
            expected: spec.magnitude.shape().to_vec(),
            got: mask.shape().to_vec(),
        });
    }
    if mask.data().iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(AudioError::MaskRange);
    }
    let masked: Vec<f32> = mask
        .data()
        .iter()
        .zip(spec.magnitude.data())
        .map(|(&m, &x)| m * x)
        .collect();
    let masked = Tensor::new(masked, spec.magnitude.shape())?;
    istft(&spec.with_magnitude(masked)?)
}
