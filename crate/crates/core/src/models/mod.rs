//! The classifier under explanation and the mask decoder.

mod classifier;
mod decoder;
mod init;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use lmac_autograd::{checkpoint, Tensor};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use classifier::{argmax, Classifier, ClassifierConfig, ClassifierOutput, ConvBlock, LATENT_BLOCKS, MIN_FRAMES};
pub use decoder::{Decoder, DecoderConfig, Stage};
pub use train::{
    accuracy, predict, train_classifier, ClassifierEpoch, ClassifierReport, ClassifierTrainConfig, FeatureSet,
};

use crate::error::{CoreError, Result};

/// Architecture record stored next to a tensor checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sidecar {
    Classifier {
        config: ClassifierConfig,
        input_mean: f64,
        input_std: f64,
    },
    Decoder {
        config: DecoderConfig,
    },
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?)
}

fn restore(names: Vec<(String, Tensor<f32>)>, expected: Vec<(String, Tensor<f32>)>) -> Result<Vec<Tensor<f32>>> {
    if names.len() != expected.len() {
        return Err(CoreError::Config(format!(
            "checkpoint holds {} tensors, architecture needs {}",
            names.len(),
            expected.len()
        )));
    }
    names
        .into_iter()
        .zip(expected)
        .map(|((name, t), (want, w))| {
            if name != want || t.shape() != w.shape() {
                return Err(CoreError::Config(format!(
                    "checkpoint tensor {name} {:?} does not match {want} {:?}",
                    t.shape(),
                    w.shape()
                )));
            }
            Ok(t.detach_requiring_grad())
        })
        .collect()
}

pub fn save_classifier(path: &Path, model: &Classifier) -> Result<()> {
    checkpoint::save(path, &model.named_parameters())?;
    write_sidecar(
        path,
        &Sidecar::Classifier {
            config: model.config.clone(),
            input_mean: model.input_mean,
            input_std: model.input_std,
        },
    )
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let Sidecar::Classifier {
        config,
        input_mean,
        input_std,
    } = read_sidecar(path)?
    else {
        return Err(CoreError::Config(format!("{} is not a classifier checkpoint", path.display())));
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = Classifier::new(config, &mut rng)?;
    let params = restore(checkpoint::load(path)?, model.named_parameters())?;
    model.set_parameters(params)?;
    model.input_mean = input_mean;
    model.input_std = input_std;
    Ok(model)
}

pub fn save_decoder(path: &Path, model: &Decoder) -> Result<()> {
    checkpoint::save(path, &model.named_parameters())?;
    write_sidecar(
        path,
        &Sidecar::Decoder {
            config: model.config.clone(),
        },
    )
}

pub fn load_decoder(path: &Path) -> Result<Decoder> {
    let Sidecar::Decoder { config } = read_sidecar(path)? else {
        return Err(CoreError::Config(format!("{} is not a decoder checkpoint", path.display())));
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = Decoder::new(config, &mut rng)?;
    let params = restore(checkpoint::load(path)?, model.named_parameters())?;
    model.set_parameters(params)?;
    Ok(model)
}
