use lmac_autograd::{conv2d, pool2d, softmax, PoolKind, Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{fan_in_uniform, he_normal};
use crate::error::{CoreError, Result};
use crate::synth::NUM_CLASSES;

/// Number of trailing blocks whose outputs are exposed as latents.
pub const LATENT_BLOCKS: usize = 4;

/// Frames the time axis must have to survive six halvings.
pub const MIN_FRAMES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub channels: Vec<usize>,
    pub n_mels: usize,
    pub n_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 64, 64, 128, 128],
            n_mels: 40,
            n_classes: NUM_CLASSES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock<E: Scalar = f32> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

/// Six conv/ReLU/avg-pool blocks, global average pooling and a linear head.
///
/// Input features are standardised by a fixed mean and standard deviation
/// estimated on the training set.
#[derive(Debug, Clone)]
pub struct Classifier<E: Scalar = f32> {
    pub config: ClassifierConfig,
    pub blocks: Vec<ConvBlock<E>>,
    pub head_weight: Tensor<E>,
    pub head_bias: Tensor<E>,
    pub input_mean: f64,
    pub input_std: f64,
}

/// Logits `[B, C]` and the outputs of the four deepest blocks.
#[derive(Debug, Clone)]
pub struct ClassifierOutput<E: Scalar = f32> {
    pub logits: Tensor<E>,
    pub latents: Vec<Tensor<E>>,
}

impl<E: Scalar> ClassifierOutput<E> {
    pub fn batch(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        let c = self.logits.shape()[1];
        self.logits
            .data()
            .chunks(c)
            .map(|row| softmax(&row.iter().map(|v| v.as_f64()).collect::<Vec<_>>()))
            .collect()
    }

    pub fn predicted(&self) -> Vec<usize> {
        let c = self.logits.shape()[1];
        self.logits.data().chunks(c).map(argmax).collect()
    }
}

pub fn argmax<E: Scalar>(row: &[E]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Halve both axes while the frequency axis allows it, else only time.
fn pool_kernel(height: usize) -> (usize, usize) {
    if height >= 2 {
        (2, 2)
    } else {
        (1, 2)
    }
}

impl<E: Scalar> Classifier<E> {
    pub fn new(config: ClassifierConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.channels.len() < LATENT_BLOCKS {
            return Err(CoreError::Config(format!(
                "need at least {LATENT_BLOCKS} blocks, got {}",
                config.channels.len()
            )));
        }
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut cin = 1;
        for &cout in &config.channels {
            let fan_in = cin * 9;
            blocks.push(ConvBlock {
                weight: he_normal(&[cout, cin, 3, 3], fan_in, rng),
                bias: fan_in_uniform(&[cout], fan_in, rng),
            });
            cin = cout;
        }
        let (head_weight, head_bias) = Self::fresh_head(cin, config.n_classes, rng);
        Ok(Self {
            config,
            blocks,
            head_weight,
            head_bias,
            input_mean: 0.0,
            input_std: 1.0,
        })
    }

    fn fresh_head(width: usize, classes: usize, rng: &mut impl Rng) -> (Tensor<E>, Tensor<E>) {
        (
            fan_in_uniform(&[width, classes], width, rng),
            fan_in_uniform(&[classes], width, rng),
        )
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{}.weight", i + 1), b.weight.clone()));
            out.push((format!("block{}.bias", i + 1), b.bias.clone()));
        }
        out.push(("head.weight".into(), self.head_weight.clone()));
        out.push(("head.bias".into(), self.head_bias.clone()));
        out
    }

    pub fn parameters(&self) -> Vec<Tensor<E>> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    /// Replaces parameters in [`Self::parameters`] order.
    pub fn set_parameters(&mut self, params: Vec<Tensor<E>>) -> Result<()> {
        let expected = 2 * self.blocks.len() + 2;
        if params.len() != expected {
            return Err(CoreError::Shape {
                expected: vec![expected],
                got: vec![params.len()],
            });
        }
        let mut it = params.into_iter();
        for b in &mut self.blocks {
            b.weight = it.next().expect("counted");
            b.bias = it.next().expect("counted");
        }
        self.head_weight = it.next().expect("counted");
        self.head_bias = it.next().expect("counted");
        Ok(())
    }

    fn map_parameters<F: lmac_autograd::Scalar>(&self, f: impl Fn(&Tensor<E>) -> Tensor<F>) -> Classifier<F> {
        Classifier {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    weight: f(&b.weight),
                    bias: f(&b.bias),
                })
                .collect(),
            head_weight: f(&self.head_weight),
            head_bias: f(&self.head_bias),
            input_mean: self.input_mean,
            input_std: self.input_std,
        }
    }

    /// Copy whose parameters are constants: gradients stop at the input.
    pub fn frozen(&self) -> Classifier<E> {
        self.map_parameters(|t| t.detach())
    }

    /// Copy in another precision, with trainable parameters.
    pub fn cast<F: Scalar>(&self) -> Classifier<F> {
        self.map_parameters(|t| t.cast::<F>().detach_requiring_grad())
    }

    fn check_input(&self, features: &Tensor<E>) -> Result<()> {
        match features.shape() {
            &[_, 1, h, t] if h == self.config.n_mels && t >= MIN_FRAMES => Ok(()),
            got => Err(CoreError::Shape {
                expected: vec![0, 1, self.config.n_mels, MIN_FRAMES],
                got: got.to_vec(),
            }),
        }
    }

    fn normalise(&self, features: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(features
            .add_scalar(E::of(-self.input_mean))?
            .scale(E::of(1.0 / self.input_std))?)
    }

    fn conv_relu(&self, i: usize, x: &Tensor<E>) -> Result<Tensor<E>> {
        let b = &self.blocks[i];
        Ok(conv2d(x, &b.weight, Some(&b.bias), 1, 1)?.relu()?)
    }

    fn pool(x: &Tensor<E>) -> Result<Tensor<E>> {
        let k = pool_kernel(x.shape()[2]);
        Ok(pool2d(PoolKind::Avg, x, k, k)?)
    }

    fn head(&self, pooled: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(pooled
            .spatial_mean()?
            .matmul(&self.head_weight)?
            .add_channel_bias(&self.head_bias)?)
    }

    /// Forward pass on log-mel features `[B, 1, Fmel, T]`.
    pub fn forward(&self, features: &Tensor<E>) -> Result<ClassifierOutput<E>> {
        self.check_input(features)?;
        let mut x = self.normalise(features)?;
        let first_latent = self.blocks.len() - LATENT_BLOCKS;
        let mut latents = Vec::with_capacity(LATENT_BLOCKS);
        for i in 0..self.blocks.len() {
            x = Self::pool(&self.conv_relu(i, &x)?)?;
            if i >= first_latent {
                latents.push(x.clone());
            }
        }
        Ok(ClassifierOutput {
            logits: self.head(&x)?,
            latents,
        })
    }

    /// Post-ReLU, pre-pool activation of the deepest conv block.
    pub fn last_conv_activation(&self, features: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(features)?;
        let mut x = self.normalise(features)?;
        let last = self.blocks.len() - 1;
        for i in 0..last {
            x = Self::pool(&self.conv_relu(i, &x)?)?;
        }
        self.conv_relu(last, &x)
    }

    /// Completes [`Self::forward`] from [`Self::last_conv_activation`].
    pub fn logits_from_last_activation(&self, activation: &Tensor<E>) -> Result<Tensor<E>> {
        self.head(&Self::pool(activation)?)
    }

    /// Copy with the head and the `k - 1` deepest blocks re-initialised.
    pub fn randomize_from_top(&self, k: usize, rng: &mut impl Rng) -> Result<Classifier<E>> {
        let depth = self.blocks.len();
        if k > depth + 1 {
            return Err(CoreError::Config(format!("cannot randomise {k} of {} layers", depth + 1)));
        }
        let mut out = self.clone();
        if k == 0 {
            return Ok(out);
        }
        let width = *self.config.channels.last().expect("non-empty");
        let (w, b) = Self::fresh_head(width, self.config.n_classes, rng);
        out.head_weight = w;
        out.head_bias = b;
        for i in (depth + 1 - k..depth).rev() {
            let cin = if i == 0 { 1 } else { self.config.channels[i - 1] };
            let cout = self.config.channels[i];
            let fan_in = cin * 9;
            out.blocks[i] = ConvBlock {
                weight: he_normal(&[cout, cin, 3, 3], fan_in, rng),
                bias: fan_in_uniform(&[cout], fan_in, rng),
            };
        }
        Ok(out)
    }
}
