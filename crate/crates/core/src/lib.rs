//! Listenable maps for audio classifiers.
//!
//! A frozen CNN classifies log-mel features; a decoder reads its latent maps
//! and predicts a mask over the linear magnitude spectrogram, trained so the
//! masked-in part keeps the decision and the masked-out part loses it. The
//! masked magnitude, put back together with the original phase, is an audio
//! clip one can listen to. Faithfulness metrics, gradient baselines and
//! sanity checks evaluate such maps.

pub mod attribution;
pub mod baselines;
mod error;
pub mod frontend;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod plot;
pub mod sanity;
pub mod synth;

pub use error::{CoreError, Result};
pub use frontend::Frontend;
