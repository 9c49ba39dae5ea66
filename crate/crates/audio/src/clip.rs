pub const SAMPLE_RATE: u32 = 16_000;

/// Mono waveform at [`SAMPLE_RATE`], optionally labelled and carrying the
/// uncontaminated signal it was mixed from.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub label: Option<usize>,
    pub clean_reference: Option<Vec<f32>>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
            label: None,
            clean_reference: None,
        }
    }

    pub fn labeled(samples: Vec<f32>, label: usize) -> Self {
        Self {
            label: Some(label),
            ..Self::new(samples)
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// The uncontaminated signal when known, else the clip itself.
    pub fn clean(&self) -> &[f32] {
        self.clean_reference.as_deref().unwrap_or(&self.samples)
    }

    pub fn clean_clip(&self) -> AudioClip {
        AudioClip {
            samples: self.clean().to_vec(),
            sample_rate: self.sample_rate,
            label: self.label,
            clean_reference: None,
        }
    }
}

pub fn power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / samples.len() as f64
}
