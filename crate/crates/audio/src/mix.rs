use crate::clip::{power, AudioClip};
use crate::error::{AudioError, Result};

/// `10 log10(P(clean) / P(mixture - clean))`.
pub fn measured_snr_db(clean: &[f32], mixture: &[f32]) -> f64 {
    let residual: Vec<f32> = mixture.iter().zip(clean).map(|(m, c)| m - c).collect();
    10.0 * (power(clean) / power(&residual)).log10()
}

/// Adds `noise` (looped or truncated to the signal's length) scaled so the
/// mixture has the requested SNR. The result keeps the signal as its
/// `clean_reference`; when the mixture would clip, mixture and reference are
/// scaled down together so the SNR is preserved.
pub fn mix_at_snr(signal: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    let n = signal.samples.len();
    if noise.samples.is_empty() {
        return Err(AudioError::ZeroPower("noise"));
    }
    let noise: Vec<f32> = noise.samples.iter().copied().cycle().take(n).collect();
    let (ps, pn) = (power(&signal.samples), power(&noise));
    if ps == 0.0 {
        return Err(AudioError::ZeroPower("signal"));
    }
    if pn == 0.0 {
        return Err(AudioError::ZeroPower("noise"));
    }
    let gain = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut mixture: Vec<f64> = signal
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &v)| s as f64 + gain * v as f64)
        .collect();
    let mut clean: Vec<f64> = signal.samples.iter().map(|&s| s as f64).collect();
    let peak = mixture.iter().fold(0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        mixture.iter_mut().for_each(|v| *v /= peak);
        clean.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(AudioClip {
        samples: mixture.into_iter().map(|v| v as f32).collect(),
        sample_rate: signal.sample_rate,
        label: signal.label,
        clean_reference: Some(clean.into_iter().map(|v| v as f32).collect()),
    })
}
