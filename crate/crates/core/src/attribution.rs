//! Attribution methods by name, mapped into either masking domain.

use lmac_audio::AudioClip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    gradcam, integrated_gradients, max_normalize, saliency, smoothgrad, BaselineConfig, ClassifierScore,
};
use crate::error::{CoreError, Result};
use crate::frontend::Frontend;
use crate::interpret::{masks_for_set, InterpretationSet};
use crate::metrics::{evaluate, Domain, EvalOptions, MelModel, MetricsReport, StftModel};
use crate::models::{Classifier, Decoder};
use crate::synth::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lmac,
    Saliency,
    Smoothgrad,
    Ig,
    Gradcam,
    Random,
    AllOnes,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Lmac,
        Method::Saliency,
        Method::Smoothgrad,
        Method::Ig,
        Method::Gradcam,
        Method::Random,
        Method::AllOnes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lmac => "lmac",
            Method::Saliency => "saliency",
            Method::Smoothgrad => "smoothgrad",
            Method::Ig => "ig",
            Method::Gradcam => "gradcam",
            Method::Random => "random",
            Method::AllOnes => "all_ones",
        }
    }

    /// Whether the method reads gradients of the classifier's log-mel input.
    pub fn is_gradient(self) -> bool {
        matches!(self, Method::Saliency | Method::Smoothgrad | Method::Ig | Method::Gradcam)
    }
}

impl std::str::FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown method {s:?}")))
    }
}

/// Every representation of a clip set the methods and metrics need.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub items: InterpretationSet,
    pub n_mels: usize,
    /// Log-mel features `[Fmel, T]`, as the classifier sees them.
    pub features: Vec<Vec<f32>>,
    /// Mel power `[Fmel, T]` before the logarithm.
    pub mel_power: Vec<Vec<f32>>,
}

impl EvalSet {
    pub fn prepare(classifier: &Classifier, frontend: &Frontend, clips: &[AudioClip]) -> Result<Self> {
        Self::from_items(InterpretationSet::prepare(classifier, frontend, clips)?, frontend)
    }

    pub fn from_items(items: InterpretationSet, frontend: &Frontend) -> Result<Self> {
        let mut features = Vec::with_capacity(items.len());
        let mut mel_power = Vec::with_capacity(items.len());
        for mag in &items.magnitudes {
            let x = lmac_autograd::Tensor::new(mag.clone(), &[1, items.bins, items.frames])?;
            features.push(frontend.features(&x)?.to_vec());
            mel_power.push(frontend.mel_power(mag, items.frames)?);
        }
        Ok(Self {
            n_mels: frontend.n_mels(),
            items,
            features,
            mel_power,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.items.frames
    }

    /// Inputs that masks multiply in `domain`.
    pub fn inputs(&self, domain: Domain) -> &[Vec<f32>] {
        match domain {
            Domain::Stft => &self.items.magnitudes,
            Domain::Mel => &self.mel_power,
        }
    }
}

/// Produces attributions of the classifier's decisions.
pub struct Attributor<'a> {
    pub classifier: &'a Classifier,
    pub decoder: Option<&'a Decoder>,
    pub frontend: &'a Frontend,
    pub baselines: BaselineConfig,
}

impl Attributor<'_> {
    fn grid(&self, set: &EvalSet, domain: Domain) -> usize {
        match domain {
            Domain::Stft => set.items.bins * set.frames(),
            Domain::Mel => set.n_mels * set.frames(),
        }
    }

    /// Native-domain L-MAC masks, or gradient maps on the mel grid.
    fn gradient_map(&self, method: Method, set: &EvalSet, i: usize, model: &ClassifierScore) -> Result<Vec<f32>> {
        let (x, c) = (&set.features[i], set.items.labels[i]);
        let raw = match method {
            Method::Saliency => saliency(model, x, c)?,
            Method::Smoothgrad => smoothgrad(
                model,
                x,
                c,
                &self.baselines.smoothgrad,
                child_seed(self.baselines.seed, 11, i as u64),
            )?,
            Method::Ig => integrated_gradients(model, x, c, &self.baselines.ig)?,
            Method::Gradcam => gradcam(model, x, c)?,
            _ => unreachable!("not a gradient method"),
        };
        Ok(max_normalize(&raw))
    }

    /// One attribution per item, in `[0, 1]`, on the grid of `domain`.
    pub fn attributions(&self, method: Method, set: &EvalSet, domain: Domain) -> Result<Vec<Vec<f32>>> {
        let frames = set.frames();
        let fb = &self.frontend.filterbank;
        let grid = self.grid(set, domain);
        match method {
            Method::AllOnes => Ok(vec![vec![1.0; grid]; set.len()]),
            Method::Random => Ok((0..set.len())
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(self.baselines.seed, 13, i as u64));
                    (0..grid).map(|_| rng.gen::<f32>()).collect()
                })
                .collect()),
            Method::Lmac => {
                let decoder = self
                    .decoder
                    .ok_or_else(|| CoreError::Config("lmac attributions need a decoder".into()))?;
                let masks = masks_for_set(self.classifier, decoder, self.frontend, &set.items)?;
                Ok(match domain {
                    Domain::Stft => masks,
                    Domain::Mel => masks.iter().map(|m| fb.average_to_mel(m, frames)).collect(),
                })
            }
            _ => {
                let model = ClassifierScore::new(self.classifier, frames);
                (0..set.len())
                    .map(|i| {
                        let map = self.gradient_map(method, set, i, &model)?;
                        Ok(match domain {
                            Domain::Mel => map,
                            Domain::Stft => max_normalize(&fb.spread_to_linear(&map, frames)),
                        })
                    })
                    .collect()
            }
        }
    }

    /// Metrics of `method` on `set`, masking in `domain`.
    pub fn evaluate(&self, method: Method, set: &EvalSet, domain: Domain, opts: &EvalOptions) -> Result<MetricsReport> {
        let attributions = self.attributions(method, set, domain)?;
        evaluate_attributions(self.classifier, self.frontend, set, &attributions, domain, opts)
    }
}

/// Metrics of precomputed attributions.
pub fn evaluate_attributions(
    classifier: &Classifier,
    frontend: &Frontend,
    set: &EvalSet,
    attributions: &[Vec<f32>],
    domain: Domain,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    match domain {
        Domain::Stft => evaluate(
            &StftModel::new(classifier, frontend, set.frames()),
            set.inputs(domain),
            attributions,
            opts,
        ),
        Domain::Mel => evaluate(
            &MelModel::new(classifier, set.n_mels, set.frames()),
            set.inputs(domain),
            attributions,
            opts,
        ),
    }
}
