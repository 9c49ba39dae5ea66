use std::fs;
use std::path::{Path, PathBuf};

use lmac_core::attribution::Method;
use lmac_core::baselines::BaselineConfig;
use lmac_core::interpret::{InterpreterTrainConfig, MaskLossConfig};
use lmac_core::metrics::{Domain, EvalOptions};
use lmac_core::models::ClassifierTrainConfig;
use lmac_core::sanity::RoarConfig;
use lmac_core::synth::DatasetConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneSettings {
    pub lambda_g: f64,
    pub cct: f64,
    pub epochs: usize,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        Self {
            lambda_g: 4.0,
            cct: 0.6,
            epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub methods: Vec<Method>,
    pub domain: Domain,
    pub options: EvalOptions,
    pub baselines: BaselineConfig,
    /// Score on 0 dB mixtures of test clips instead of the clips themselves.
    pub ood: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            domain: Domain::Stft,
            options: EvalOptions::default(),
            baselines: BaselineConfig::default(),
            ood: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoarSettings {
    pub methods: Vec<Method>,
    /// Share of each class's training clips the retrained classifiers see.
    pub train_fraction: f64,
    pub curve: RoarConfig,
}

impl Default for RoarSettings {
    fn default() -> Self {
        Self {
            methods: vec![Method::Lmac, Method::Random],
            train_fraction: 1.0 / 3.0,
            curve: RoarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizeSettings {
    pub items: usize,
}

impl Default for RandomizeSettings {
    fn default() -> Self {
        Self { items: 16 }
    }
}

/// Every setting of a run. Written to the run directory before any work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed, copied into every component's own seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Dataset directory; `<output_dir>/data` when unset.
    pub data_dir: Option<PathBuf>,
    pub data: DatasetConfig,
    pub classifier: ClassifierTrainConfig,
    pub interpreter: InterpreterTrainConfig,
    /// Training clips per class used for the decoder; all of them when unset.
    pub interpreter_per_class: Option<usize>,
    pub loss: MaskLossConfig,
    pub finetune: FinetuneSettings,
    pub eval: EvalSettings,
    pub roar: RoarSettings,
    pub randomize: RandomizeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            data_dir: None,
            data: DatasetConfig::default(),
            classifier: ClassifierTrainConfig::default(),
            interpreter: InterpreterTrainConfig::default(),
            interpreter_per_class: None,
            loss: MaskLossConfig::default(),
            finetune: FinetuneSettings::default(),
            eval: EvalSettings::default(),
            roar: RoarSettings::default(),
            randomize: RandomizeSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Missing(format!("config file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }

    /// Propagates the master seed into the component configs.
    pub fn propagate_seed(&mut self) {
        self.data.seed = self.seed;
        self.classifier.seed = self.seed;
        self.interpreter.seed = self.seed;
        self.eval.baselines.seed = self.seed;
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.output_dir.join("classifier.lmt1")
    }

    pub fn decoder_path(&self) -> PathBuf {
        self.output_dir.join("decoder.lmt1")
    }

    pub fn finetuned_path(&self) -> PathBuf {
        self.output_dir.join("decoder_finetuned.lmt1")
    }

    /// Loss settings for the second stage.
    pub fn finetune_loss(&self) -> MaskLossConfig {
        MaskLossConfig {
            lambda_g: self.finetune.lambda_g,
            cct: self.finetune.cct,
            ..self.loss
        }
    }

    /// Serialises the config as `<output_dir>/<command>.config.json`.
    pub fn persist(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(format!("{command}.config.json"));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(csv: &str) -> Result<Vec<Method>> {
    let methods = csv
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("--methods names no method".into()));
    }
    Ok(methods)
}
