//! The masking objective, its regulariser and the decoder training loops.

use lmac_audio::{synthesize_interpretation, AudioClip, MelFilterbank, Spectrogram};
use lmac_autograd::{adam_step, AdamConfig, AdamState, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::frontend::Frontend;
use crate::models::{Classifier, Decoder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskLossConfig {
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub lambda_s: f64,
    pub lambda_g: f64,
    pub cct: f64,
    /// Per-item ceiling on the masked-out cross-entropy; `None` leaves it unbounded.
    pub out_cap: Option<f64>,
}

impl Default for MaskLossConfig {
    fn default() -> Self {
        Self {
            lambda_in: 5.0,
            lambda_out: 1.0,
            lambda_s: 1.0,
            lambda_g: 0.0,
            cct: 0.6,
            out_cap: Some((crate::synth::NUM_CLASSES as f64).ln()),
        }
    }
}

impl MaskLossConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.lambda_in, self.lambda_out, self.lambda_s, self.lambda_g];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CoreError::Config(format!("loss coefficients must be finite and >= 0: {coeffs:?}")));
        }
        if let Some(cap) = self.out_cap {
            if !cap.is_finite() || cap <= 0.0 {
                return Err(CoreError::Config(format!("out_cap {cap} must be finite and > 0")));
            }
        }
        // Thresholds above 1 are allowed and simply never pass.
        if !self.cct.is_finite() || self.cct < 0.0 {
            return Err(CoreError::Config(format!("cct {} must be finite and >= 0", self.cct)));
        }
        Ok(())
    }
}

/// The scalar objective and the values of its parts.
#[derive(Debug, Clone)]
pub struct LossTerms<E: Scalar = f32> {
    pub total: Tensor<E>,
    pub term_in: f64,
    pub term_out: f64,
    pub reg: f64,
}

fn classify_masked<E: Scalar>(
    classifier: &Classifier<E>,
    filterbank: &MelFilterbank,
    masked: &Tensor<E>,
    labels: &[usize],
    cap: Option<f64>,
) -> Result<Tensor<E>> {
    let &[b, _, t] = masked.shape() else {
        return Err(CoreError::Shape {
            expected: vec![0, filterbank.bins(), 0],
            got: masked.shape().to_vec(),
        });
    };
    let features = filterbank.log_mel(masked)?.reshape(&[b, 1, filterbank.n_mels(), t])?;
    let logits = classifier.forward(&features)?.logits;
    let log_probs = logits.log_softmax()?;
    let Some(cap) = cap else {
        return Ok(log_probs.nll_loss(labels)?);
    };
    // min(ce, cap) = ce - relu(ce - cap), exact below the cap.
    let ce = log_probs.gather_rows(labels)?.scale(-E::one())?;
    Ok(ce.sub(&ce.add_scalar(E::of(-cap))?.relu()?)?.mean()?)
}

fn check_same(expected: &Tensor<impl Scalar>, got: &[usize]) -> Result<()> {
    if expected.shape() != got {
        return Err(CoreError::Shape {
            expected: expected.shape().to_vec(),
            got: got.to_vec(),
        });
    }
    Ok(())
}

/// `λ_s·mean|M|`, plus `λ_g·mean|M⊙X − X_target|` for every item whose
/// `guidance` flag is set. Per-item terms are averaged over the batch.
pub fn regularizer<E: Scalar>(
    mask: &Tensor<E>,
    magnitude: &Tensor<E>,
    target: &Tensor<E>,
    cfg: &MaskLossConfig,
    guidance: &[bool],
) -> Result<Tensor<E>> {
    check_same(mask, magnitude.shape())?;
    check_same(mask, target.shape())?;
    let sparsity = mask.abs()?.mean()?.scale(E::of(cfg.lambda_s))?;
    let batch = mask.shape()[0];
    if guidance.len() != batch {
        return Err(CoreError::Shape {
            expected: vec![batch],
            got: vec![guidance.len()],
        });
    }
    if cfg.lambda_g == 0.0 || !guidance.iter().any(|&g| g) {
        return Ok(sparsity);
    }
    let per_item = mask.numel() / batch;
    let deviation = mask
        .mul(magnitude)?
        .sub(target)?
        .abs()?
        .reshape(&[batch, per_item])?
        .matmul(&Tensor::full(&[per_item, 1], E::of(1.0 / per_item as f64)))?;
    let gate = Tensor::new(guidance.iter().map(|&g| if g { E::one() } else { E::zero() }).collect(), &[batch, 1])?;
    let guided = deviation.mul(&gate)?.sum()?.scale(E::of(cfg.lambda_g / batch as f64))?;
    Ok(sparsity.add(&guided)?)
}

/// `λ_in·CE(f(M⊙X), y) − λ_out·CE(f((1−M)⊙X), y) + R(M)` over a batch of
/// magnitudes `[B, F, T]`. `target` defaults to the magnitude itself.
/// The masked-out term is averaged after clipping each item at `cfg.out_cap`.
#[allow(clippy::too_many_arguments)]
pub fn masking_loss<E: Scalar>(
    classifier: &Classifier<E>,
    filterbank: &MelFilterbank,
    magnitude: &Tensor<E>,
    mask: &Tensor<E>,
    labels: &[usize],
    target: Option<&Tensor<E>>,
    guidance: &[bool],
    cfg: &MaskLossConfig,
) -> Result<LossTerms<E>> {
    check_same(magnitude, mask.shape())?;
    let term_in = classify_masked(classifier, filterbank, &mask.mul(magnitude)?, labels, None)?;
    let term_out = classify_masked(classifier, filterbank, &mask.one_minus()?.mul(magnitude)?, labels, cfg.out_cap)?;
    let reg = regularizer(mask, magnitude, target.unwrap_or(magnitude), cfg, guidance)?;
    let total = term_in
        .scale(E::of(cfg.lambda_in))?
        .sub(&term_out.scale(E::of(cfg.lambda_out))?)?
        .add(&reg)?;
    Ok(LossTerms {
        term_in: term_in.item().as_f64(),
        term_out: term_out.item().as_f64(),
        reg: reg.item().as_f64(),
        total,
    })
}

/// 1 where the magnitude exceeds its own median, else 0.
pub fn binarize_median(values: &[f32]) -> Vec<f32> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let median = sorted[sorted.len() / 2];
    values.iter().map(|&v| if v > median { 1.0 } else { 0.0 }).collect()
}

/// Cosine of the angle between two vectors; 0 when either is zero.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Whether the guidance term applies to an item: the mask must resemble the
/// binarised target at least as closely as `cct`.
pub fn cct_gate(mask: &[f32], target: &[f32], cct: f64) -> Result<bool> {
    if mask.len() != target.len() {
        return Err(CoreError::Shape {
            expected: vec![target.len()],
            got: vec![mask.len()],
        });
    }
    Ok(cosine_similarity(mask, &binarize_median(target)) >= cct)
}

/// Magnitudes of a clip set, with the classifier's decisions as labels and
/// clean-signal magnitudes as guidance targets where a clean reference exists.
#[derive(Debug, Clone)]
pub struct InterpretationSet {
    pub bins: usize,
    pub frames: usize,
    pub magnitudes: Vec<Vec<f32>>,
    pub targets: Vec<Option<Vec<f32>>>,
    pub labels: Vec<usize>,
}

impl InterpretationSet {
    pub fn prepare(classifier: &Classifier, frontend: &Frontend, clips: &[AudioClip]) -> Result<Self> {
        if clips.is_empty() {
            return Err(CoreError::Empty("interpretation set"));
        }
        let mut magnitudes = Vec::with_capacity(clips.len());
        let mut targets = Vec::with_capacity(clips.len());
        let mut frames = 0;
        for clip in clips {
            let spec = frontend.analyze(&clip.samples)?;
            frames = spec.frames();
            magnitudes.push(spec.magnitude.to_vec());
            targets.push(match &clip.clean_reference {
                Some(clean) => Some(frontend.analyze(clean)?.magnitude.to_vec()),
                None => None,
            });
        }
        let mut set = Self {
            bins: frontend.bins(),
            frames,
            magnitudes,
            targets,
            labels: Vec::new(),
        };
        let frozen = classifier.frozen();
        let index: Vec<usize> = (0..set.len()).collect();
        for chunk in index.chunks(32) {
            let out = frozen.forward(&frontend.features(&set.magnitude_batch(chunk)?)?)?;
            set.labels.extend(out.predicted());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn target(&self, i: usize) -> &[f32] {
        self.targets[i].as_deref().unwrap_or(&self.magnitudes[i])
    }

    fn stack<'a>(&self, rows: impl Iterator<Item = &'a [f32]>, n: usize) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(n * self.bins * self.frames);
        rows.for_each(|r| data.extend_from_slice(r));
        Ok(Tensor::new(data, &[n, self.bins, self.frames])?)
    }

    pub fn magnitude_batch(&self, index: &[usize]) -> Result<Tensor<f32>> {
        self.stack(index.iter().map(|&i| self.magnitudes[i].as_slice()), index.len())
    }

    pub fn target_batch(&self, index: &[usize]) -> Result<Tensor<f32>> {
        self.stack(index.iter().map(|&i| self.target(i)), index.len())
    }
}

/// Masks `[B, F, T]` for a batch of magnitudes.
pub fn predict_masks(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    magnitude: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let frames = magnitude.shape()[2];
    let out = classifier.frozen().forward(&frontend.features(magnitude)?)?;
    let latents: Vec<Tensor<f32>> = out.latents.iter().map(|h| h.detach()).collect();
    Ok(decoder.forward(&latents, frames)?.detach())
}

/// Masks for every item of a set, one `[F, T]` buffer each.
pub fn masks_for_set(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    set: &InterpretationSet,
) -> Result<Vec<Vec<f32>>> {
    let index: Vec<usize> = (0..set.len()).collect();
    let per = set.bins * set.frames;
    let mut out = Vec::with_capacity(set.len());
    for chunk in index.chunks(16) {
        let masks = predict_masks(classifier, decoder, frontend, &set.magnitude_batch(chunk)?)?;
        out.extend(masks.data().chunks(per).map(|m| m.to_vec()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpreterTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for InterpreterTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub term_in: f64,
    pub term_out: f64,
    pub reg: f64,
    pub mask_mean: f64,
    pub gated_fraction: f64,
}

pub fn log_lines(log: &[EpochLog]) -> Result<String> {
    let mut out = String::new();
    for rec in log {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

fn run_training(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    set: &InterpretationSet,
    loss_cfg: &MaskLossConfig,
    cfg: &InterpreterTrainConfig,
    gates: &[bool],
) -> Result<(Decoder, Vec<EpochLog>)> {
    loss_cfg.validate()?;
    if set.is_empty() {
        return Err(CoreError::Empty("interpreter training"));
    }
    if cfg.batch_size == 0 {
        return Err(CoreError::Config("batch size must be positive".into()));
    }
    let frozen = classifier.frozen();
    // Fresh leaves, so gradients never land on the caller's decoder.
    let mut decoder = decoder.clone();
    let mut params: Vec<Tensor<f32>> = decoder.parameters().iter().map(|p| p.detach_requiring_grad()).collect();
    decoder.set_parameters(params.clone())?;
    let mut state = AdamState::new(&params);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let gated_fraction = gates.iter().filter(|&&g| g).count() as f64 / set.len() as f64;
    let guided = loss_cfg.lambda_g > 0.0;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0f64; 5];
        let numeric = |e: CoreError| if e.is_numeric() { CoreError::Diverged { epoch } } else { e };
        for chunk in order.chunks(cfg.batch_size) {
            let x = set.magnitude_batch(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
            let latents: Vec<Tensor<f32>> = frozen
                .forward(&frontend.features(&x)?)?
                .latents
                .iter()
                .map(|h| h.detach())
                .collect();
            let mask = decoder.forward(&latents, set.frames).map_err(numeric)?;
            let target = if guided { Some(set.target_batch(chunk)?) } else { None };
            let flags: Vec<bool> = chunk.iter().map(|&i| guided && gates[i]).collect();
            let terms = masking_loss(
                &frozen,
                &frontend.filterbank,
                &x,
                &mask,
                &labels,
                target.as_ref(),
                &flags,
                loss_cfg,
            )
            .map_err(numeric)?;
            let loss = terms.total.item() as f64;
            if !loss.is_finite() {
                return Err(CoreError::Diverged { epoch });
            }
            terms.total.backward().map_err(|e| numeric(e.into()))?;
            adam_step(&mut params, &mut state, &adam)?;
            decoder.set_parameters(params.clone())?;
            let w = chunk.len() as f64;
            let mm = mask.data().iter().map(|&v| v as f64).sum::<f64>() / mask.numel() as f64;
            for (s, v) in sums.iter_mut().zip([loss, terms.term_in, terms.term_out, terms.reg, mm]) {
                *s += v * w;
            }
        }
        let n = set.len() as f64;
        let rec = EpochLog {
            epoch,
            mean_loss: sums[0] / n,
            term_in: sums[1] / n,
            term_out: sums[2] / n,
            reg: sums[3] / n,
            mask_mean: sums[4] / n,
            gated_fraction,
        };
        log::info!(
            "decoder epoch {epoch}: loss {:.4} in {:.4} out {:.4} mm {:.3}",
            rec.mean_loss,
            rec.term_in,
            rec.term_out,
            rec.mask_mean
        );
        log.push(rec);
    }
    Ok((decoder, log))
}

/// First stage: the masking objective with sparsity only.
pub fn train_interpreter(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    set: &InterpretationSet,
    loss_cfg: &MaskLossConfig,
    cfg: &InterpreterTrainConfig,
) -> Result<(Decoder, Vec<EpochLog>)> {
    if loss_cfg.lambda_g != 0.0 {
        return Err(CoreError::Config("the first stage trains without guidance (lambda_g = 0)".into()));
    }
    run_training(classifier, decoder, frontend, set, loss_cfg, cfg, &vec![false; set.len()])
}

/// Items whose mask from `decoder` passes the gate at `cct`.
pub fn gate_items(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    set: &InterpretationSet,
    cct: f64,
) -> Result<Vec<bool>> {
    let masks = masks_for_set(classifier, decoder, frontend, set)?;
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| cct_gate(m, set.target(i), cct))
        .collect()
}

/// Second stage: adds the guidance term for items whose first-stage mask
/// passes the gate, pulling `M⊙X` towards the clean target.
pub fn finetune_interpreter(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    set: &InterpretationSet,
    loss_cfg: &MaskLossConfig,
    cfg: &InterpreterTrainConfig,
) -> Result<(Decoder, Vec<EpochLog>)> {
    let gates = gate_items(classifier, decoder, frontend, set, loss_cfg.cct)?;
    run_training(classifier, decoder, frontend, set, loss_cfg, cfg, &gates)
}

/// A mask with everything derived from it for one clip.
#[derive(Debug, Clone)]
pub struct Interpretation {
    pub spectrogram: Spectrogram,
    pub mask: Tensor<f32>,
    pub masked: Tensor<f32>,
    pub waveform: AudioClip,
    pub predicted: usize,
    pub probability: f64,
}

impl Interpretation {
    pub fn mask_mean(&self) -> f64 {
        self.mask.data().iter().map(|&v| v as f64).sum::<f64>() / self.mask.numel() as f64
    }
}

/// Mask for the classifier's own decision on `clip` and its listenable rendering.
/// With `hard_threshold`, the mask is binarised before resynthesis.
pub fn interpret_clip(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    clip: &AudioClip,
    hard_threshold: Option<f32>,
) -> Result<Interpretation> {
    let spec = frontend.analyze(&clip.samples)?;
    let (f, t) = (spec.bins(), spec.frames());
    let x = spec.magnitude.reshape(&[1, f, t])?;
    let out = classifier.frozen().forward(&frontend.features(&x)?)?;
    let (predicted, probability) = {
        let p = &out.probs()[0];
        let c = out.predicted()[0];
        (c, p[c])
    };
    let mut mask = predict_masks(classifier, decoder, frontend, &x)?.reshape(&[f, t])?;
    if let Some(th) = hard_threshold {
        mask = Tensor::new(mask.data().iter().map(|&m| if m >= th { 1.0 } else { 0.0 }).collect(), &[f, t])?;
    }
    let masked = Tensor::new(
        mask.data().iter().zip(spec.magnitude.data()).map(|(m, x)| m * x).collect(),
        &[f, t],
    )?;
    let mut waveform = synthesize_interpretation(&mask, &spec)?;
    waveform.label = Some(predicted);
    Ok(Interpretation {
        spectrogram: spec,
        mask,
        masked,
        waveform,
        predicted,
        probability,
    })
}
