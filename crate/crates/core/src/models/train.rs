use lmac_audio::AudioClip;
use lmac_autograd::{adam_step, AdamConfig, AdamState, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, ClassifierConfig};
use crate::error::{CoreError, Result};
use crate::frontend::Frontend;

/// Log-mel features `[Fmel, T]` per clip with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n_mels: usize,
    pub frames: usize,
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn from_clips(frontend: &Frontend, clips: &[AudioClip]) -> Result<Self> {
        let mut features = Vec::with_capacity(clips.len());
        let mut frames = 0;
        for clip in clips {
            let spec = frontend.analyze(&clip.samples)?;
            frames = spec.frames();
            let mag = spec.magnitude.reshape(&[1, spec.bins(), frames])?;
            features.push(frontend.features(&mag)?.to_vec());
        }
        Ok(Self {
            n_mels: frontend.n_mels(),
            frames,
            features,
            labels: clips.iter().map(|c| c.label.unwrap_or(0)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Stacks the selected items into `[B, 1, Fmel, T]`.
    pub fn batch(&self, index: &[usize]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(index.len() * self.n_mels * self.frames);
        for &i in index {
            data.extend_from_slice(&self.features[i]);
        }
        Ok(Tensor::new(data, &[index.len(), 1, self.n_mels, self.frames])?)
    }

    pub fn subset(&self, index: &[usize]) -> FeatureSet {
        FeatureSet {
            n_mels: self.n_mels,
            frames: self.frames,
            features: index.iter().map(|&i| self.features[i].clone()).collect(),
            labels: index.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Probability mass spread uniformly over all classes in the targets.
    pub label_smoothing: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            label_smoothing: 0.1,
        }
    }
}

/// `(1 − ε)·CE(y) + ε·mean_c CE(c)`.
fn smoothed_cross_entropy(logits: &Tensor, labels: &[usize], eps: f64) -> Result<Tensor> {
    let log_probs = logits.log_softmax()?;
    let hard = log_probs.nll_loss(labels)?;
    if eps == 0.0 {
        return Ok(hard);
    }
    let uniform = log_probs.mean()?.scale(-1.0)?;
    Ok(hard.scale(1.0 - eps as f32)?.add(&uniform.scale(eps as f32)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub epochs: Vec<ClassifierEpoch>,
    pub valid_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

const EVAL_BATCH: usize = 32;

pub fn predict(classifier: &Classifier, set: &FeatureSet) -> Result<Vec<usize>> {
    let frozen = classifier.frozen();
    let mut out = Vec::with_capacity(set.len());
    let index: Vec<usize> = (0..set.len()).collect();
    for chunk in index.chunks(EVAL_BATCH) {
        out.extend(frozen.forward(&set.batch(chunk)?)?.predicted());
    }
    Ok(out)
}

pub fn accuracy(classifier: &Classifier, set: &FeatureSet) -> Result<f64> {
    if set.is_empty() {
        return Err(CoreError::Empty("accuracy"));
    }
    let pred = predict(classifier, set)?;
    let hits = pred.iter().zip(&set.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / set.len() as f64)
}

fn moments(set: &FeatureSet) -> (f64, f64) {
    let n: usize = set.features.iter().map(|f| f.len()).sum();
    let mean = set.features.iter().flatten().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = set
        .features
        .iter()
        .flatten()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    (mean, var.sqrt().max(1e-6))
}

/// Cross-entropy training with Adam from a fresh initialisation.
pub fn train_classifier(
    train: &FeatureSet,
    valid: Option<&FeatureSet>,
    test: Option<&FeatureSet>,
    config: ClassifierConfig,
    cfg: &ClassifierTrainConfig,
) -> Result<(Classifier, ClassifierReport)> {
    if train.is_empty() {
        return Err(CoreError::Empty("train_classifier"));
    }
    if cfg.batch_size == 0 {
        return Err(CoreError::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Classifier::<f32>::new(config, &mut rng)?;
    (model.input_mean, model.input_std) = moments(train);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut params = model.parameters();
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut hits) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let out = model.forward(&train.batch(chunk)?).map_err(|e| diverged(e, epoch))?;
            hits += out.predicted().iter().zip(&labels).filter(|(p, y)| p == y).count();
            let loss = smoothed_cross_entropy(&out.logits, &labels, cfg.label_smoothing)
                .map_err(|e| diverged(e, epoch))?;
            if !loss.item().is_finite() {
                return Err(CoreError::Diverged { epoch });
            }
            total += loss.item() as f64 * chunk.len() as f64;
            loss.backward().map_err(|e| diverged(e.into(), epoch))?;
            adam_step(&mut params, &mut state, &adam)?;
            model.set_parameters(params.clone())?;
        }
        let rec = ClassifierEpoch {
            epoch,
            mean_loss: total / train.len() as f64,
            train_accuracy: hits as f64 / train.len() as f64,
        };
        log::info!("classifier epoch {epoch}: loss {:.4} acc {:.3}", rec.mean_loss, rec.train_accuracy);
        epochs.push(rec);
    }
    let report = ClassifierReport {
        epochs,
        valid_accuracy: valid.map(|v| accuracy(&model, v)).transpose()?,
        test_accuracy: test.map(|t| accuracy(&model, t)).transpose()?,
    };
    Ok((model, report))
}

fn diverged(e: CoreError, epoch: usize) -> CoreError {
    if e.is_numeric() {
        CoreError::Diverged { epoch }
    } else {
        e
    }
}
