//! Seeded eight-class corpus of tones, chirps, clicks and shaped noise.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use lmac_audio::{mix_at_snr, wav_read, wav_write, AudioClip, SAMPLE_RATE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const NUM_CLASSES: usize = 8;
pub const CLIP_SECONDS: f64 = 2.0;

pub fn clip_len() -> usize {
    (CLIP_SECONDS * SAMPLE_RATE as f64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    PureTone,
    HarmonicTone,
    UpChirp,
    DownChirp,
    AmNoiseBurst,
    ClickTrain,
    LowBandNoise,
    HighBandNoise,
}

impl SynthKind {
    pub const ALL: [SynthKind; NUM_CLASSES] = [
        SynthKind::PureTone,
        SynthKind::HarmonicTone,
        SynthKind::UpChirp,
        SynthKind::DownChirp,
        SynthKind::AmNoiseBurst,
        SynthKind::ClickTrain,
        SynthKind::LowBandNoise,
        SynthKind::HighBandNoise,
    ];

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| CoreError::Config(format!("class id {id} outside 0..{NUM_CLASSES}")))
    }

    pub fn id(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::PureTone => "pure_tone",
            SynthKind::HarmonicTone => "harmonic_tone",
            SynthKind::UpChirp => "up_chirp",
            SynthKind::DownChirp => "down_chirp",
            SynthKind::AmNoiseBurst => "am_noise_burst",
            SynthKind::ClickTrain => "click_train",
            SynthKind::LowBandNoise => "low_band_noise",
            SynthKind::HighBandNoise => "high_band_noise",
        }
    }
}

/// Concrete parameters of one rendered clip. Frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signature {
    PureTone { f0: f64 },
    HarmonicTone { f0: f64, harmonics: usize },
    Chirp { start: f64, end: f64 },
    AmNoiseBurst { rate: f64 },
    ClickTrain { period: usize },
    BandNoise { low: f64, high: f64 },
}

impl Signature {
    /// Draws parameters from the class's range.
    pub fn sample(kind: SynthKind, rng: &mut impl Rng) -> Self {
        match kind {
            SynthKind::PureTone => Signature::PureTone {
                f0: rng.gen_range(500.0..3000.0),
            },
            SynthKind::HarmonicTone => Signature::HarmonicTone {
                f0: rng.gen_range(120.0..300.0),
                harmonics: rng.gen_range(4..=7),
            },
            SynthKind::UpChirp => Signature::Chirp {
                start: rng.gen_range(300.0..700.0),
                end: rng.gen_range(2500.0..5000.0),
            },
            SynthKind::DownChirp => Signature::Chirp {
                start: rng.gen_range(2500.0..5000.0),
                end: rng.gen_range(300.0..700.0),
            },
            SynthKind::AmNoiseBurst => Signature::AmNoiseBurst {
                rate: rng.gen_range(2.0..5.0),
            },
            // 8 to 25 clicks per second, on a whole-sample period.
            SynthKind::ClickTrain => Signature::ClickTrain {
                period: rng.gen_range(640..=2000),
            },
            SynthKind::LowBandNoise => Signature::BandNoise {
                low: rng.gen_range(100.0..300.0),
                high: rng.gen_range(800.0..1200.0),
            },
            SynthKind::HighBandNoise => Signature::BandNoise {
                low: rng.gen_range(3500.0..4500.0),
                high: rng.gen_range(6000.0..7500.0),
            },
        }
    }

    /// Unit-peak waveform of `len` samples. Noise-based signatures draw from `rng`.
    pub fn render(&self, len: usize, rng: &mut impl Rng) -> Vec<f32> {
        let sr = SAMPLE_RATE as f64;
        let dur = len as f64 / sr;
        let raw: Vec<f64> = match *self {
            Signature::PureTone { f0 } => {
                let phase = rng.gen_range(0.0..2.0 * PI);
                (0..len).map(|i| (2.0 * PI * f0 * i as f64 / sr + phase).sin()).collect()
            }
            Signature::HarmonicTone { f0, harmonics } => (0..len)
                .map(|i| {
                    let t = i as f64 / sr;
                    (1..=harmonics)
                        .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                        .sum()
                })
                .collect(),
            Signature::Chirp { start, end } => {
                let slope = (end - start) / dur;
                (0..len)
                    .map(|i| {
                        let t = i as f64 / sr;
                        (2.0 * PI * (start * t + 0.5 * slope * t * t)).sin()
                    })
                    .collect()
            }
            Signature::AmNoiseBurst { rate } => {
                let offset = rng.gen_range(0.0..1.0);
                (0..len)
                    .map(|i| {
                        let t = i as f64 / sr;
                        let env = (PI * (rate * t + offset)).sin().powi(4);
                        env * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            }
            Signature::ClickTrain { period } => {
                let first = rng.gen_range(0..period);
                let mut out = vec![0.0; len];
                let mut start = first;
                while start < len {
                    for (j, slot) in out[start..].iter_mut().take(96).enumerate() {
                        let j = j as f64;
                        *slot += (-j / 16.0).exp() * (2.0 * PI * 2500.0 * j / sr).cos();
                    }
                    start += period;
                }
                out
            }
            Signature::BandNoise { low, high } => band_noise(len, low, high, rng),
        };
        let peak = raw.iter().fold(0f64, |m, v| m.max(v.abs()));
        raw.iter().map(|&v| (v / peak) as f32).collect()
    }
}

/// Gaussian noise restricted to `[low, high]` Hz by zeroing FFT bins.
fn band_noise(len: usize, low: f64, high: f64, rng: &mut impl Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut spec = vec![Complex::new(0.0, 0.0); len];
    for k in 1..len / 2 {
        let f = k as f64 * sr / len as f64;
        if f >= low && f <= high {
            let z = Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
            spec[k] = z;
            spec[len - k] = z.conj();
        }
    }
    FftPlanner::<f64>::new().plan_fft_inverse(len).process(&mut spec);
    spec.into_iter().map(|z| z.re).collect()
}

/// A labelled 2 s clip of class `class_id` with randomised parameters and level.
pub fn generate_clip(class_id: usize, rng: &mut impl Rng) -> Result<AudioClip> {
    let kind = SynthKind::from_id(class_id)?;
    let sig = Signature::sample(kind, rng);
    let gain = rng.gen_range(0.3f32..0.9);
    let samples = sig.render(clip_len(), rng).into_iter().map(|v| v * gain).collect();
    Ok(AudioClip::labeled(samples, class_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contamination {
    #[default]
    None,
    WhiteNoise,
    ClassMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub train_per_class: usize,
    pub valid_per_class: usize,
    pub test_per_class: usize,
    pub contamination: Contamination,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_per_class: 200,
            valid_per_class: 40,
            test_per_class: 40,
            contamination: Contamination::None,
            snr_db: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub split: Split,
    pub contamination: Contamination,
    pub seed: u64,
    pub clips: Vec<AudioClip>,
    /// Per-clip generation seed.
    pub clip_seeds: Vec<u64>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clips.iter().map(|c| c.label.unwrap_or(0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
}

/// SplitMix64 finaliser, used to derive independent child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ stream) ^ index)
}

fn contaminate(clip: AudioClip, how: Contamination, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<AudioClip> {
    let label = clip.label.unwrap_or(0);
    let noise = match how {
        Contamination::None => return Ok(clip),
        Contamination::WhiteNoise => {
            AudioClip::new((0..clip.len()).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
        }
        Contamination::ClassMixture => {
            let other = (label + rng.gen_range(1..NUM_CLASSES)) % NUM_CLASSES;
            generate_clip(other, rng)?
        }
    };
    Ok(mix_at_snr(&clip, &noise, snr_db)?)
}

/// Generates one split; class labels cycle through all classes.
pub fn build_split(split: Split, per_class: usize, cfg: &DatasetConfig) -> Result<DatasetSplit> {
    let seed = child_seed(cfg.seed, split.stream(), u64::MAX);
    let mut clips = Vec::with_capacity(per_class * NUM_CLASSES);
    let mut clip_seeds = Vec::with_capacity(per_class * NUM_CLASSES);
    for i in 0..per_class * NUM_CLASSES {
        let s = child_seed(cfg.seed, split.stream(), i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let clip = generate_clip(i % NUM_CLASSES, &mut rng)?;
        clips.push(contaminate(clip, cfg.contamination, cfg.snr_db, &mut rng)?);
        clip_seeds.push(s);
    }
    Ok(DatasetSplit {
        split,
        contamination: cfg.contamination,
        seed,
        clips,
        clip_seeds,
    })
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.train_per_class == 0 || cfg.valid_per_class == 0 || cfg.test_per_class == 0 {
        return Err(CoreError::Config("per-class counts must be at least 1".into()));
    }
    if !cfg.snr_db.is_finite() {
        return Err(CoreError::Config(format!("snr {} dB", cfg.snr_db)));
    }
    Ok(Dataset {
        train: build_split(Split::Train, cfg.train_per_class, cfg)?,
        valid: build_split(Split::Valid, cfg.valid_per_class, cfg)?,
        test: build_split(Split::Test, cfg.test_per_class, cfg)?,
    })
}

/// Pairs clips of distinct classes into 0 dB mixtures labelled by the first clip.
pub fn make_ood_mixtures(test: &DatasetSplit, rng: &mut impl Rng) -> Result<DatasetSplit> {
    let n = test.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| test.clips[i].label);
    let classes = test.labels().into_iter().collect::<BTreeSet<_>>().len();
    let half = n / 2;
    let largest = (0..NUM_CLASSES)
        .map(|c| test.clips.iter().filter(|clip| clip.label == Some(c)).count())
        .max()
        .unwrap_or(0);
    if classes < 2 || largest > n - half {
        return Err(CoreError::Config(format!(
            "cannot pair {n} clips into distinct-class mixtures ({classes} classes, largest has {largest})"
        )));
    }
    // Sorted by class, position i and i + ceil(n/2) never share a class when
    // no class holds more than half the clips.
    let mut pairs: Vec<(usize, usize)> = (0..half).map(|i| (order[i], order[i + n - half])).collect();
    pairs.shuffle(rng);
    let mut clips = Vec::with_capacity(half);
    let mut clip_seeds = Vec::with_capacity(half);
    for (a, b) in pairs {
        let (first, second) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        let primary = &test.clips[first];
        let source = AudioClip {
            clean_reference: None,
            samples: primary.clean().to_vec(),
            ..primary.clone()
        };
        let other = AudioClip::new(test.clips[second].clean().to_vec());
        clips.push(mix_at_snr(&source, &other, 0.0)?);
        clip_seeds.push(test.clip_seeds[first]);
    }
    Ok(DatasetSplit {
        split: Split::Test,
        contamination: Contamination::ClassMixture,
        seed: test.seed,
        clips,
        clip_seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: String,
    pub class_id: usize,
    pub split: Split,
    pub contamination: Contamination,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<String>,
}

pub const MANIFEST: &str = "manifest.jsonl";

/// Writes every clip as WAV (plus its clean reference, if any) and a JSON-lines manifest.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let mut manifest = String::new();
    for split in [&data.train, &data.valid, &data.test] {
        let sub = dir.join(split.split.name());
        fs::create_dir_all(&sub)?;
        for (i, clip) in split.clips.iter().enumerate() {
            let rel = format!("{}/{i:05}.wav", split.split.name());
            wav_write(dir.join(&rel), clip)?;
            let clean_path = match &clip.clean_reference {
                Some(clean) => {
                    let rel = format!("{}/{i:05}.clean.wav", split.split.name());
                    wav_write(dir.join(&rel), &AudioClip::new(clean.clone()))?;
                    Some(rel)
                }
                None => None,
            };
            let rec = ManifestRecord {
                path: rel,
                class_id: clip.label.unwrap_or(0),
                split: split.split,
                contamination: split.contamination,
                seed: split.clip_seeds[i],
                clean_path,
            };
            manifest.push_str(&serde_json::to_string(&rec)?);
            manifest.push('\n');
        }
    }
    fs::File::create(dir.join(MANIFEST))?.write_all(manifest.as_bytes())?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(dir.join(MANIFEST))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Reads back a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let records = read_manifest(dir)?;
    let load = |split: Split| -> Result<DatasetSplit> {
        let mut clips = Vec::new();
        let mut clip_seeds = Vec::new();
        let mut contamination = Contamination::None;
        for rec in records.iter().filter(|r| r.split == split) {
            let mut clip = wav_read(resolve(dir, &rec.path))?;
            clip.label = Some(rec.class_id);
            if let Some(clean) = &rec.clean_path {
                clip.clean_reference = Some(wav_read(resolve(dir, clean))?.samples);
            }
            contamination = rec.contamination;
            clips.push(clip);
            clip_seeds.push(rec.seed);
        }
        Ok(DatasetSplit {
            split,
            contamination,
            seed: 0,
            clips,
            clip_seeds,
        })
    };
    Ok(Dataset {
        train: load(Split::Train)?,
        valid: load(Split::Valid)?,
        test: load(Split::Test)?,
    })
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}
