use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use log::warn;

use crate::clip::{AudioClip, SAMPLE_RATE};
use crate::error::{AudioError, Result};

const FULL_SCALE: f32 = 32768.0;

/// Reads a 16-bit PCM mono file at 16 kHz.
pub fn wav_read(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedChannels(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedFormat(format!("sample rate {}", spec.sample_rate)));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / FULL_SCALE))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AudioClip::new(samples))
}

/// Writes 16-bit PCM mono. Samples outside the representable range are
/// saturated with a warning.
pub fn wav_write(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    let mut clipped = 0usize;
    for &s in &clip.samples {
        let scaled = (s * FULL_SCALE).round();
        let q = scaled.clamp(i16::MIN as f32, i16::MAX as f32);
        if q != scaled {
            clipped += 1;
        }
        writer.write_sample(q as i16)?;
    }
    writer.finalize()?;
    if clipped > 0 {
        warn!("saturated {clipped} samples while writing 16-bit PCM");
    }
    Ok(())
}
