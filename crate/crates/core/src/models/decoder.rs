use lmac_autograd::{concat_channels, conv2d, conv_transpose2d, resize_bilinear, Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classifier::LATENT_BLOCKS;
use super::init::{he_normal, zeros_param};
use crate::error::{CoreError, Result};

/// Keeps the mask strictly inside (0, 1) even when the sigmoid saturates.
const MASK_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Channels of the classifier latents, shallowest first.
    pub latent_channels: Vec<usize>,
    /// Output channels of the four upsampling stages, deepest first.
    pub stage_channels: Vec<usize>,
    pub bins: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            latent_channels: vec![64, 64, 128, 128],
            stage_channels: vec![64, 64, 32, 16],
            bins: 257,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage<E: Scalar = f32> {
    /// `[Cin, Cout, 2, 2]`.
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

/// U-Net style mask decoder.
///
/// Stage 1 upsamples the deepest latent. Every later stage upsamples the
/// previous output concatenated with the next shallower latent, after
/// resizing to that latent's grid. A 1×1 projection, a bilinear resize to the
/// spectrogram grid and a sigmoid produce the mask.
#[derive(Debug, Clone)]
pub struct Decoder<E: Scalar = f32> {
    pub config: DecoderConfig,
    pub stages: Vec<Stage<E>>,
    pub proj_weight: Tensor<E>,
    pub proj_bias: Tensor<E>,
}

impl<E: Scalar> Decoder<E> {
    pub fn new(config: DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.latent_channels.len() != LATENT_BLOCKS || config.stage_channels.len() != LATENT_BLOCKS {
            return Err(CoreError::Config(format!(
                "decoder needs {LATENT_BLOCKS} latents and stages, got {} and {}",
                config.latent_channels.len(),
                config.stage_channels.len()
            )));
        }
        let mut stages = Vec::with_capacity(LATENT_BLOCKS);
        let mut cin = *config.latent_channels.last().expect("non-empty");
        for (s, &cout) in config.stage_channels.iter().enumerate() {
            stages.push(Stage {
                weight: he_normal(&[cin, cout, 2, 2], cin, rng),
                bias: zeros_param(&[cout]),
            });
            // Skip connection for the next stage, from the next shallower latent.
            let skip = LATENT_BLOCKS - 2;
            cin = cout + if s <= skip { config.latent_channels[skip - s] } else { 0 };
        }
        let last = *config.stage_channels.last().expect("non-empty");
        Ok(Self {
            proj_weight: he_normal(&[1, last, 1, 1], last, rng),
            proj_bias: zeros_param(&[1]),
            config,
            stages,
        })
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{}.weight", i + 1), s.weight.clone()));
            out.push((format!("stage{}.bias", i + 1), s.bias.clone()));
        }
        out.push(("proj.weight".into(), self.proj_weight.clone()));
        out.push(("proj.bias".into(), self.proj_bias.clone()));
        out
    }

    pub fn parameters(&self) -> Vec<Tensor<E>> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn set_parameters(&mut self, params: Vec<Tensor<E>>) -> Result<()> {
        let expected = 2 * self.stages.len() + 2;
        if params.len() != expected {
            return Err(CoreError::Shape {
                expected: vec![expected],
                got: vec![params.len()],
            });
        }
        let mut it = params.into_iter();
        for s in &mut self.stages {
            s.weight = it.next().expect("counted");
            s.bias = it.next().expect("counted");
        }
        self.proj_weight = it.next().expect("counted");
        self.proj_bias = it.next().expect("counted");
        Ok(())
    }

    pub fn cast<F: Scalar>(&self) -> Decoder<F> {
        let c = |t: &Tensor<E>| t.cast::<F>().detach_requiring_grad();
        Decoder {
            config: self.config.clone(),
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    weight: c(&s.weight),
                    bias: c(&s.bias),
                })
                .collect(),
            proj_weight: c(&self.proj_weight),
            proj_bias: c(&self.proj_bias),
        }
    }

    fn check_latents(&self, latents: &[Tensor<E>]) -> Result<usize> {
        if latents.len() != LATENT_BLOCKS {
            return Err(CoreError::Shape {
                expected: vec![LATENT_BLOCKS],
                got: vec![latents.len()],
            });
        }
        let batch = latents[0].shape().first().copied().unwrap_or(0);
        for (h, &c) in latents.iter().zip(&self.config.latent_channels) {
            match h.shape() {
                &[b, ch, _, _] if b == batch && ch == c => {}
                got => {
                    return Err(CoreError::Shape {
                        expected: vec![batch, c, 0, 0],
                        got: got.to_vec(),
                    })
                }
            }
        }
        Ok(batch)
    }

    /// Mask `[B, bins, frames]` from latents ordered shallowest first.
    pub fn forward(&self, latents: &[Tensor<E>], frames: usize) -> Result<Tensor<E>> {
        let batch = self.check_latents(latents)?;
        let mut z = latents[LATENT_BLOCKS - 1].clone();
        for (s, stage) in self.stages.iter().enumerate() {
            z = conv_transpose2d(&z, &stage.weight, Some(&stage.bias), 2, 0)?.relu()?;
            if s + 1 < LATENT_BLOCKS {
                let skip = &latents[LATENT_BLOCKS - 2 - s];
                let size = (skip.shape()[2], skip.shape()[3]);
                if (z.shape()[2], z.shape()[3]) != size {
                    z = resize_bilinear(&z, size)?;
                }
                z = concat_channels(&[z, skip.clone()])?;
            }
        }
        let logits = conv2d(&z, &self.proj_weight, Some(&self.proj_bias), 1, 0)?;
        let logits = resize_bilinear(&logits, (self.config.bins, frames))?;
        let mask = logits
            .sigmoid()?
            .scale(E::of(1.0 - 2.0 * MASK_MARGIN))?
            .add_scalar(E::of(MASK_MARGIN))?;
        Ok(mask.reshape(&[batch, self.config.bins, frames])?)
    }
}
