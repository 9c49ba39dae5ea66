//! Gradient attributions on the classifier's log-mel input.

use lmac_autograd::{resize_bilinear, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::models::Classifier;

/// A differentiable class score over flat feature maps.
pub trait GradientModel {
    /// Score of `classes[i]` for each input and its gradient with respect to the input.
    fn score_grads(&self, inputs: &[Vec<f32>], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f32>>)>;
}

/// Activations of a spatial layer and the class score's gradient there.
pub trait CamModel {
    /// `(activation, gradient)`, each `[K, h, w]`, and the shape `(K, h, w)`.
    fn activation_grads(&self, input: &[f32], class: usize) -> Result<(Vec<f32>, Vec<f32>, (usize, usize, usize))>;
    /// Grid the map is resized to.
    fn input_shape(&self) -> (usize, usize);
}

/// The classifier's pre-softmax class score over log-mel features `[Fmel, T]`.
pub struct ClassifierScore {
    classifier: Classifier,
    n_mels: usize,
    frames: usize,
}

impl ClassifierScore {
    pub fn new(classifier: &Classifier, frames: usize) -> Self {
        Self {
            classifier: classifier.frozen(),
            n_mels: classifier.config.n_mels,
            frames,
        }
    }

    fn check(&self, input: &[f32]) -> Result<()> {
        if input.len() != self.n_mels * self.frames {
            return Err(CoreError::Shape {
                expected: vec![self.n_mels, self.frames],
                got: vec![input.len()],
            });
        }
        Ok(())
    }
}

const GRAD_BATCH: usize = 16;

impl GradientModel for ClassifierScore {
    fn score_grads(&self, inputs: &[Vec<f32>], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f32>>)> {
        let mut scores = Vec::with_capacity(inputs.len());
        let mut grads = Vec::with_capacity(inputs.len());
        let per = self.n_mels * self.frames;
        for (chunk, cls) in inputs.chunks(GRAD_BATCH).zip(classes.chunks(GRAD_BATCH)) {
            let mut data = Vec::with_capacity(chunk.len() * per);
            for x in chunk {
                self.check(x)?;
                data.extend_from_slice(x);
            }
            let x = Tensor::leaf(data, &[chunk.len(), 1, self.n_mels, self.frames], true)?;
            let picked = self.classifier.forward(&x)?.logits.gather_rows(cls)?;
            scores.extend(picked.data().iter().map(|&v| v as f64));
            picked.sum()?.backward()?;
            let g = x.grad().expect("input requires grad");
            grads.extend(g.chunks(per).map(|c| c.to_vec()));
        }
        Ok((scores, grads))
    }
}

impl CamModel for ClassifierScore {
    fn activation_grads(&self, input: &[f32], class: usize) -> Result<(Vec<f32>, Vec<f32>, (usize, usize, usize))> {
        self.check(input)?;
        let x = Tensor::new(input.to_vec(), &[1, 1, self.n_mels, self.frames])?;
        let act = self.classifier.last_conv_activation(&x)?.detach_requiring_grad();
        let &[_, k, h, w] = act.shape() else { unreachable!("rank 4 activation") };
        let score = self.classifier.logits_from_last_activation(&act)?.gather_rows(&[class])?;
        score.sum()?.backward()?;
        Ok((act.to_vec(), act.grad().expect("activation requires grad"), (k, h, w)))
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.n_mels, self.frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothGradConfig {
    pub n_samples: usize,
    /// Noise standard deviation as a fraction of the input's value range.
    pub sigma: f64,
}

impl Default for SmoothGradConfig {
    fn default() -> Self {
        Self {
            n_samples: 25,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgConfig {
    pub n_steps: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self { n_steps: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub smoothgrad: SmoothGradConfig,
    pub ig: IgConfig,
    pub seed: u64,
}

/// `|∂f_c/∂x|`.
pub fn saliency(model: &dyn GradientModel, features: &[f32], class: usize) -> Result<Vec<f32>> {
    let (_, grads) = model.score_grads(&[features.to_vec()], &[class])?;
    Ok(grads[0].iter().map(|g| g.abs()).collect())
}

/// Mean saliency over Gaussian-perturbed copies of the input.
pub fn smoothgrad(
    model: &dyn GradientModel,
    features: &[f32],
    class: usize,
    cfg: &SmoothGradConfig,
    seed: u64,
) -> Result<Vec<f32>> {
    if cfg.n_samples == 0 {
        return Err(CoreError::Config("smoothgrad needs at least one sample".into()));
    }
    let (lo, hi) = features
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma = cfg.sigma * (hi - lo) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<Vec<f32>> = (0..cfg.n_samples)
        .map(|_| {
            features
                .iter()
                .map(|&v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (v as f64 + sigma * e) as f32
                })
                .collect()
        })
        .collect();
    let (_, grads) = model.score_grads(&noisy, &vec![class; cfg.n_samples])?;
    Ok(mean_abs(&grads, features.len(), true))
}

fn mean_abs(grads: &[Vec<f32>], len: usize, abs: bool) -> Vec<f32> {
    let mut acc = vec![0f64; len];
    for g in grads {
        for (a, &v) in acc.iter_mut().zip(g) {
            *a += if abs { (v as f64).abs() } else { v as f64 };
        }
    }
    acc.into_iter().map(|a| (a / grads.len() as f64) as f32).collect()
}

/// `(x − x₀) ⊙ mean_k ∇f_c(x₀ + (k/n)(x − x₀))` for `k = 0..n`, with an all-zero baseline `x₀`.
pub fn integrated_gradients(model: &dyn GradientModel, features: &[f32], class: usize, cfg: &IgConfig) -> Result<Vec<f32>> {
    if cfg.n_steps < 2 {
        return Err(CoreError::Config("integrated gradients needs at least 2 steps".into()));
    }
    let n = cfg.n_steps;
    let path: Vec<Vec<f32>> = (0..n)
        .map(|k| {
            let alpha = k as f64 / n as f64;
            features.iter().map(|&v| (alpha * v as f64) as f32).collect()
        })
        .collect();
    let (_, grads) = model.score_grads(&path, &vec![class; n])?;
    let avg = mean_abs(&grads, features.len(), false);
    Ok(avg.iter().zip(features).map(|(g, x)| g * x).collect())
}

/// Gradient-weighted class activation map from activations and gradients
/// `[K, h, w]`, resized to `out` and scaled to a maximum of 1.
pub fn gradcam_map(activation: &[f32], grads: &[f32], shape: (usize, usize, usize), out: (usize, usize)) -> Result<Vec<f32>> {
    let (k, h, w) = shape;
    if activation.len() != k * h * w || grads.len() != k * h * w {
        return Err(CoreError::Shape {
            expected: vec![k, h, w],
            got: vec![activation.len(), grads.len()],
        });
    }
    let plane = h * w;
    let mut cam = vec![0f64; plane];
    for ch in 0..k {
        let g = &grads[ch * plane..(ch + 1) * plane];
        let alpha = g.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
        for (c, &a) in cam.iter_mut().zip(&activation[ch * plane..(ch + 1) * plane]) {
            *c += alpha * a as f64;
        }
    }
    let cam: Vec<f32> = cam.into_iter().map(|v| v.max(0.0) as f32).collect();
    let resized = resize_bilinear(&Tensor::new(cam, &[1, 1, h, w])?, out)?.to_vec();
    Ok(max_normalize(&resized))
}

pub fn gradcam(model: &dyn CamModel, features: &[f32], class: usize) -> Result<Vec<f32>> {
    let (act, grads, shape) = model.activation_grads(features, class)?;
    gradcam_map(&act, &grads, shape, model.input_shape())
}

/// Absolute values divided by their maximum; all-zero input stays zero.
pub fn max_normalize(values: &[f32]) -> Vec<f32> {
    let peak = values.iter().fold(0f32, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v.abs() / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcam_pencil_case() {
        // One channel, activation [[1, 2], [3, 4]], gradients averaging 0.5.
        let map = gradcam_map(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 0.5, 0.5], (1, 2, 2), (2, 2)).unwrap();
        let expected = [0.25, 0.5, 0.75, 1.0];
        for (a, b) in map.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradcam_negative_sum_is_zero() {
        let map = gradcam_map(&[1.0, 2.0, 3.0, 4.0], &[-1.0; 4], (1, 2, 2), (4, 6)).unwrap();
        assert!(map.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradcam_uniform_channel_is_uniform() {
        let map = gradcam_map(&[0.7; 6], &[0.2; 6], (1, 2, 3), (5, 9)).unwrap();
        assert!(map.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn max_normalize_keeps_zeros() {
        assert_eq!(max_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(max_normalize(&[-2.0, 1.0]), vec![1.0, 0.5]);
    }
}
