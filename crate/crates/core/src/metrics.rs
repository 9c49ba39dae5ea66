//! Faithfulness and conciseness scores for masking attributions.

use lmac_autograd::{softmax, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::frontend::Frontend;
use crate::models::{argmax, Classifier};

/// Where a map lives and where masking is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Linear magnitude `[F, T]`, re-featurised after masking.
    #[default]
    Stft,
    /// Mel power `[Fmel, T]`, log-compressed after masking.
    Mel,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Stft => "stft",
            Domain::Mel => "mel",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stft" => Ok(Domain::Stft),
            "mel" => Ok(Domain::Mel),
            other => Err(CoreError::Config(format!("unknown domain {other:?}"))),
        }
    }
}

/// A classifier seen as a map from flat inputs to logits.
pub trait ScoreModel {
    fn logits(&self, inputs: &[&[f32]]) -> Result<Vec<Vec<f64>>>;
}

const BATCH: usize = 32;

fn batched(
    inputs: &[&[f32]],
    rows: usize,
    cols: usize,
    run: impl Fn(Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(BATCH) {
        let x = crate::frontend::stack(chunk, rows, cols)?;
        let logits = run(x)?;
        let c = logits.shape()[1];
        out.extend(logits.data().chunks(c).map(|r| r.iter().map(|&v| v as f64).collect::<Vec<_>>()));
    }
    Ok(out)
}

/// The classifier over linear magnitudes `[F, T]`.
pub struct StftModel<'a> {
    pub classifier: Classifier,
    pub frontend: &'a Frontend,
    pub frames: usize,
}

impl<'a> StftModel<'a> {
    pub fn new(classifier: &Classifier, frontend: &'a Frontend, frames: usize) -> Self {
        Self {
            classifier: classifier.frozen(),
            frontend,
            frames,
        }
    }
}

impl ScoreModel for StftModel<'_> {
    fn logits(&self, inputs: &[&[f32]]) -> Result<Vec<Vec<f64>>> {
        batched(inputs, self.frontend.bins(), self.frames, |x| {
            Ok(self.classifier.forward(&self.frontend.features(&x)?)?.logits)
        })
    }
}

/// The classifier over mel power `[Fmel, T]`.
pub struct MelModel {
    pub classifier: Classifier,
    pub n_mels: usize,
    pub frames: usize,
}

impl MelModel {
    pub fn new(classifier: &Classifier, n_mels: usize, frames: usize) -> Self {
        Self {
            classifier: classifier.frozen(),
            n_mels,
            frames,
        }
    }
}

impl ScoreModel for MelModel {
    fn logits(&self, inputs: &[&[f32]]) -> Result<Vec<Vec<f64>>> {
        batched(inputs, self.n_mels, self.frames, |x| {
            let b = x.shape()[0];
            let features = x
                .add_scalar(lmac_audio::LOG_FLOOR as f32)?
                .log()?
                .reshape(&[b, 1, self.n_mels, self.frames])?;
            Ok(self.classifier.forward(&features)?.logits)
        })
    }
}

/// Which score FF differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfScore {
    #[default]
    Probability,
    Logit,
}

/// Target-class scores of every item on the input, the masked-in input and
/// the masked-out input. The target class is the decision on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub class: Vec<usize>,
    pub prob: Vec<f64>,
    pub prob_in: Vec<f64>,
    pub prob_out: Vec<f64>,
    pub logit: Vec<f64>,
    pub logit_out: Vec<f64>,
    pub argmax_in: Vec<usize>,
}

fn apply(inputs: &[Vec<f32>], masks: &[Vec<f32>], complement: bool) -> Vec<Vec<f32>> {
    inputs
        .iter()
        .zip(masks)
        .map(|(x, m)| {
            x.iter()
                .zip(m)
                .map(|(&x, &m)| if complement { (1.0 - m) * x } else { m * x })
                .collect()
        })
        .collect()
}

fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
    v.iter().map(|x| x.as_slice()).collect()
}

impl ScoreTable {
    pub fn compute(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(CoreError::Empty("metrics"));
        }
        if masks.len() != inputs.len() {
            return Err(CoreError::Shape {
                expected: vec![inputs.len()],
                got: vec![masks.len()],
            });
        }
        for (x, m) in inputs.iter().zip(masks) {
            if x.len() != m.len() {
                return Err(CoreError::Shape {
                    expected: vec![x.len()],
                    got: vec![m.len()],
                });
            }
        }
        let base = model.logits(&refs(inputs))?;
        let masked_in = model.logits(&refs(&apply(inputs, masks, false)))?;
        let masked_out = model.logits(&refs(&apply(inputs, masks, true)))?;
        let class: Vec<usize> = base.iter().map(|l| argmax(l)).collect();
        let pick = |rows: &[Vec<f64>], probs: bool| -> Vec<f64> {
            rows.iter()
                .zip(&class)
                .map(|(r, &c)| if probs { softmax(r)[c] } else { r[c] })
                .collect()
        };
        Ok(Self {
            prob: pick(&base, true),
            prob_in: pick(&masked_in, true),
            prob_out: pick(&masked_out, true),
            logit: pick(&base, false),
            logit_out: pick(&masked_out, false),
            argmax_in: masked_in.iter().map(|l| argmax(l)).collect(),
            class,
        })
    }

    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    pub fn ff(&self, score: FfScore) -> f64 {
        let (a, b) = match score {
            FfScore::Probability => (&self.prob, &self.prob_out),
            FfScore::Logit => (&self.logit, &self.logit_out),
        };
        a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / self.len() as f64
    }

    /// Percentages of items whose confidence strictly rises, strictly falls
    /// or stays equal under the masked-in input.
    pub fn confidence_changes(&self) -> (f64, f64, f64) {
        let n = self.len() as f64;
        let count = |f: fn(f64, f64) -> bool| {
            self.prob_in.iter().zip(&self.prob).filter(|(&i, &x)| f(i, x)).count() as f64 * 100.0 / n
        };
        (count(|i, x| i > x), count(|i, x| i < x), count(|i, x| i == x))
    }

    pub fn ai(&self) -> f64 {
        self.confidence_changes().0
    }

    pub fn ad(&self) -> f64 {
        let terms: Vec<f64> = self
            .prob
            .iter()
            .zip(&self.prob_in)
            .filter_map(|(&x, &m)| {
                if x == 0.0 {
                    log::warn!("average drop: skipping an item with zero confidence");
                    None
                } else {
                    Some((x - m).max(0.0) / x)
                }
            })
            .collect();
        mean_percent(&terms)
    }

    pub fn ag(&self) -> f64 {
        let terms: Vec<f64> = self
            .prob
            .iter()
            .zip(&self.prob_in)
            .filter_map(|(&x, &m)| {
                if x == 1.0 {
                    log::warn!("average gain: skipping an item with full confidence");
                    None
                } else {
                    Some((m - x).max(0.0) / (1.0 - x))
                }
            })
            .collect();
        mean_percent(&terms)
    }

    pub fn fid_in(&self) -> f64 {
        let same = self.class.iter().zip(&self.argmax_in).filter(|(a, b)| a == b).count();
        same as f64 / self.len() as f64
    }
}

fn mean_percent(terms: &[f64]) -> f64 {
    if terms.is_empty() {
        0.0
    } else {
        100.0 * terms.iter().sum::<f64>() / terms.len() as f64
    }
}

pub fn faithfulness_ff(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>], score: FfScore) -> Result<f64> {
    Ok(ScoreTable::compute(model, inputs, masks)?.ff(score))
}

pub fn average_increase(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>]) -> Result<f64> {
    Ok(ScoreTable::compute(model, inputs, masks)?.ai())
}

pub fn average_drop(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>]) -> Result<f64> {
    Ok(ScoreTable::compute(model, inputs, masks)?.ad())
}

pub fn average_gain(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>]) -> Result<f64> {
    Ok(ScoreTable::compute(model, inputs, masks)?.ag())
}

pub fn fidelity_in(model: &dyn ScoreModel, inputs: &[Vec<f32>], masks: &[Vec<f32>]) -> Result<f64> {
    Ok(ScoreTable::compute(model, inputs, masks)?.fid_in())
}

fn magnitudes(attribution: &[f32]) -> Result<(Vec<f64>, f64)> {
    let a: Vec<f64> = attribution.iter().map(|&v| (v as f64).abs()).collect();
    let total: f64 = a.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(CoreError::ZeroAttribution);
    }
    Ok((a, total))
}

/// Gini index of the absolute values.
pub fn sparseness(attribution: &[f32]) -> Result<f64> {
    let (mut a, total) = magnitudes(attribution)?;
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let weighted: f64 = a
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * (i + 1) as f64 - n - 1.0) * v)
        .sum();
    Ok(weighted / (n * total))
}

/// Shannon entropy (nats) of the normalised absolute values.
pub fn complexity(attribution: &[f32]) -> Result<f64> {
    let (a, total) = magnitudes(attribution)?;
    Ok(a.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum())
}

/// Grand mean over all values of all masks.
pub fn mask_mean(masks: &[Vec<f32>]) -> Result<f64> {
    let n: usize = masks.iter().map(|m| m.len()).sum();
    if n == 0 {
        return Err(CoreError::Empty("mask_mean"));
    }
    Ok(masks.iter().flatten().map(|&v| v as f64).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "AI")]
    pub ai: f64,
    #[serde(rename = "AD")]
    pub ad: f64,
    #[serde(rename = "AG")]
    pub ag: f64,
    #[serde(rename = "FF")]
    pub ff: f64,
    #[serde(rename = "Fid_In")]
    pub fid_in: f64,
    #[serde(rename = "SPS")]
    pub sps: f64,
    #[serde(rename = "COMP")]
    pub comp: f64,
    #[serde(rename = "MM")]
    pub mm: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "method,domain,AI,AD,AG,FF,Fid_In,SPS,COMP,MM,N";

    pub fn csv_row(&self, method: &str, domain: Domain) -> String {
        format!(
            "{method},{},{:.4},{:.4},{:.4},{:.6},{:.4},{:.4},{:.4},{:.4},{}",
            domain.name(),
            self.ai,
            self.ad,
            self.ag,
            self.ff,
            self.fid_in,
            self.sps,
            self.comp,
            self.mm,
            self.n
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ff_score: FfScore,
    /// Binarise masks at this level before masking.
    pub hard_threshold: Option<f32>,
}

/// Clips values into `[0, 1]`, optionally thresholding them.
pub fn masking_map(values: &[f32], hard_threshold: Option<f32>) -> Vec<f32> {
    values
        .iter()
        .map(|&v| match hard_threshold {
            Some(th) => {
                if v >= th {
                    1.0
                } else {
                    0.0
                }
            }
            None => v.clamp(0.0, 1.0),
        })
        .collect()
}

/// All metrics for one set of inputs and attributions in a single domain.
pub fn evaluate(
    model: &dyn ScoreModel,
    inputs: &[Vec<f32>],
    attributions: &[Vec<f32>],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let masks: Vec<Vec<f32>> = attributions.iter().map(|a| masking_map(a, opts.hard_threshold)).collect();
    let table = ScoreTable::compute(model, inputs, &masks)?;
    let (mut sps, mut comp, mut kept) = (0.0, 0.0, 0usize);
    for m in &masks {
        match (sparseness(m), complexity(m)) {
            (Ok(s), Ok(c)) => {
                sps += s;
                comp += c;
                kept += 1;
            }
            _ => log::warn!("skipping an all-zero attribution in SPS/COMP"),
        }
    }
    let (sps, comp) = if kept > 0 {
        (sps / kept as f64, comp / kept as f64)
    } else {
        (0.0, 0.0)
    };
    Ok(MetricsReport {
        ai: table.ai(),
        ad: table.ad(),
        ag: table.ag(),
        ff: table.ff(opts.ff_score),
        fid_in: table.fid_in(),
        sps,
        comp,
        mm: mask_mean(&masks)?,
        n: table.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_of_small_vectors() {
        assert!((sparseness(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!(sparseness(&[0.3; 10]).unwrap().abs() < 1e-12);
        let mut one_hot = vec![0.0; 16];
        one_hot[5] = 2.0;
        assert!((sparseness(&one_hot).unwrap() - 15.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_small_vectors() {
        assert!((complexity(&[0.5, 0.25, 0.25]).unwrap() - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((complexity(&[1.0; 8]).unwrap() - 8f64.ln()).abs() < 1e-12);
        assert_eq!(complexity(&[0.0, 3.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_attribution_is_an_error() {
        assert!(matches!(sparseness(&[0.0; 4]), Err(CoreError::ZeroAttribution)));
        assert!(matches!(complexity(&[0.0; 4]), Err(CoreError::ZeroAttribution)));
    }

    #[test]
    fn mask_mean_cases() {
        assert_eq!(mask_mean(&[vec![1.0; 6], vec![1.0; 6]]).unwrap(), 1.0);
        assert_eq!(mask_mean(&[vec![0.0; 6]]).unwrap(), 0.0);
        let checker: Vec<f32> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f32).collect();
        assert_eq!(mask_mean(&[checker]).unwrap(), 0.5);
        assert!(mask_mean(&[]).is_err());
    }

    #[test]
    fn scale_invariance() {
        let a: Vec<f32> = (0..50).map(|i| ((i * 37) % 11) as f32 * 0.1).collect();
        let b: Vec<f32> = a.iter().map(|v| v * 4.0).collect();
        assert!((sparseness(&a).unwrap() - sparseness(&b).unwrap()).abs() < 1e-9);
        assert!((complexity(&a).unwrap() - complexity(&b).unwrap()).abs() < 1e-9);
    }
}
