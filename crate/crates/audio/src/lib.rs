//! Audio front end: centred Hann STFT and its overlap-add inverse, HTK
//! log-mel features, 16-bit WAV I/O and additive mixing at a target SNR.

mod clip;
mod error;
mod mel;
mod mix;
mod stft;
mod wav;

pub use clip::{power, AudioClip, SAMPLE_RATE};
pub use error::{AudioError, Result};
pub use mel::{hz_to_mel, mel_features, mel_to_hz, MelFeatures, MelFilterbank, MelParams, LOG_FLOOR};
pub use mix::{measured_snr_db, mix_at_snr};
pub use stft::{istft, stft, synthesize_interpretation, Spectrogram, StftParams, WindowKind};
pub use wav::{wav_read, wav_write};
