//! Remove-and-retrain and cascading model randomisation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::frontend::Frontend;
use crate::interpret::{masks_for_set, InterpretationSet};
use crate::models::{train_classifier, Classifier, ClassifierConfig, ClassifierTrainConfig, Decoder, FeatureSet};
use crate::synth::child_seed;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const WINDOW: usize = 7;

/// Mean SSIM over all valid 7×7 windows of two `rows × cols` maps, after
/// rescaling the pair jointly to `[0, 1]`.
pub fn ssim(a: &[f32], b: &[f32], rows: usize, cols: usize) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols || a.is_empty() {
        return Err(CoreError::Shape {
            expected: vec![rows, cols],
            got: vec![a.len(), b.len()],
        });
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let x: Vec<f64> = a.iter().map(|&v| (v as f64 - lo) / range).collect();
    let y: Vec<f64> = b.iter().map(|&v| (v as f64 - lo) / range).collect();
    let (wr, wc) = (WINDOW.min(rows), WINDOW.min(cols));
    let n = (wr * wc) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=rows - wr {
        for c0 in 0..=cols - wc {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + wr {
                for c in c0..c0 + wc {
                    let (p, q) = (x[r * cols + c], y[r * cols + c]);
                    sx += p;
                    sy += q;
                    sxx += p * p;
                    syy += q * q;
                    sxy += p * q;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationTrace {
    pub k_blocks: Vec<usize>,
    pub ssim_to_original: Vec<f64>,
    /// Mask of the first item at every `k`.
    #[serde(skip)]
    pub snapshots: Vec<Vec<f32>>,
}

/// Re-randomises the classifier from the top, `k = 0..=depth + 1` layers,
/// and compares the decoder's masks with the unrandomised ones.
pub fn cascading_randomization(
    classifier: &Classifier,
    decoder: &Decoder,
    frontend: &Frontend,
    items: &InterpretationSet,
    seed: u64,
) -> Result<RandomizationTrace> {
    let depth = classifier.blocks.len() + 1;
    let original = masks_for_set(classifier, decoder, frontend, items)?;
    let mut trace = RandomizationTrace {
        k_blocks: Vec::with_capacity(depth + 1),
        ssim_to_original: Vec::with_capacity(depth + 1),
        snapshots: Vec::with_capacity(depth + 1),
    };
    for k in 0..=depth {
        // The same stream for every k: layer j gets the same fresh weights
        // whenever it is randomised, so the cascade is cumulative.
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 17, 0));
        let randomized = classifier.randomize_from_top(k, &mut rng)?;
        let masks = masks_for_set(&randomized, decoder, frontend, items)?;
        let mut total = 0.0;
        for (m, o) in masks.iter().zip(&original) {
            total += ssim(m, o, items.bins, items.frames)?;
        }
        trace.k_blocks.push(k);
        trace.ssim_to_original.push(total / items.len() as f64);
        trace.snapshots.push(masks[0].clone());
        log::info!("randomisation k={k}: ssim {:.4}", trace.ssim_to_original[k]);
    }
    Ok(trace)
}

/// Zeroes the `percent`% highest-ranked bins; ties go to the lower index.
pub fn ablate(values: &[f32], attribution: &[f32], percent: f64) -> Result<Vec<f32>> {
    if values.len() != attribution.len() {
        return Err(CoreError::Shape {
            expected: vec![values.len()],
            got: vec![attribution.len()],
        });
    }
    let n = values.len();
    let k = ((percent / 100.0) * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| attribution[j].total_cmp(&attribution[i]).then(i.cmp(&j)));
    let mut out = values.to_vec();
    for &i in order.iter().take(k.min(n)) {
        out[i] = 0.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoarConfig {
    pub percents: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: ClassifierTrainConfig,
}

impl Default for RoarConfig {
    fn default() -> Self {
        Self {
            percents: vec![0.0, 10.0, 20.0, 30.0, 50.0, 70.0, 90.0],
            seeds: vec![0, 1, 2],
            train: ClassifierTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoarCurve {
    pub method: String,
    pub percents: Vec<f64>,
    /// Test accuracy per percent, averaged over seeds.
    pub accuracy: Vec<f64>,
    pub per_seed: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

/// Linear magnitudes with per-item attributions on the same grid and true labels.
#[derive(Debug, Clone)]
pub struct RoarData {
    pub frames: usize,
    pub magnitudes: Vec<Vec<f32>>,
    pub attributions: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

fn ablated_features(frontend: &Frontend, data: &RoarData, percent: f64) -> Result<FeatureSet> {
    let mut features = Vec::with_capacity(data.magnitudes.len());
    for (mag, attr) in data.magnitudes.iter().zip(&data.attributions) {
        let x = ablate(mag, attr, percent)?;
        let t = lmac_autograd::Tensor::new(x, &[1, frontend.bins(), data.frames])?;
        features.push(frontend.features(&t)?.to_vec());
    }
    Ok(FeatureSet {
        n_mels: frontend.n_mels(),
        frames: data.frames,
        features,
        labels: data.labels.clone(),
    })
}

/// Retrains a fresh classifier on ablated training data for every percent
/// and seed, scoring it on identically ablated test data.
pub fn roar(
    frontend: &Frontend,
    method: &str,
    train: &RoarData,
    test: &RoarData,
    arch: &ClassifierConfig,
    cfg: &RoarConfig,
) -> Result<RoarCurve> {
    if cfg.percents.is_empty() {
        return Err(CoreError::Empty("roar percents"));
    }
    if cfg.seeds.is_empty() {
        return Err(CoreError::Empty("roar seeds"));
    }
    if cfg.percents.windows(2).any(|w| w[1] <= w[0]) || cfg.percents.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(CoreError::Config(format!("percents must increase within [0, 100]: {:?}", cfg.percents)));
    }
    let mut per_seed = Vec::with_capacity(cfg.percents.len());
    for &p in &cfg.percents {
        let train_set = ablated_features(frontend, train, p)?;
        let test_set = ablated_features(frontend, test, p)?;
        let mut accs = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let tc = ClassifierTrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (_, report) = train_classifier(&train_set, None, Some(&test_set), arch.clone(), &tc)?;
            accs.push(report.test_accuracy.expect("test set given"));
        }
        log::info!("roar {method} p={p}: {accs:?}");
        per_seed.push(accs);
    }
    Ok(RoarCurve {
        method: method.to_string(),
        percents: cfg.percents.clone(),
        accuracy: per_seed.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect(),
        per_seed,
        seeds: cfg.seeds.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_ranks_and_breaks_ties_by_index() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let a = [0.5, 0.9, 0.5, 0.1];
        assert_eq!(ablate(&x, &a, 50.0).unwrap(), vec![0.0, 0.0, 3.0, 4.0]);
        assert_eq!(ablate(&x, &a, 0.0).unwrap(), x.to_vec());
        assert_eq!(ablate(&x, &a, 100.0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn ssim_of_constant_maps() {
        assert!((ssim(&[0.3; 64], &[0.3; 64], 8, 8).unwrap() - 1.0).abs() < 1e-12);
    }
}
