use lmac_autograd::Tensor;
use lmac_core::baselines::{
    gradcam_map, integrated_gradients, max_normalize, saliency, smoothgrad, ClassifierScore, GradientModel, IgConfig,
    SmoothGradConfig,
};
use lmac_core::models::{Classifier, ClassifierConfig};
use lmac_core::sanity::{ablate, ssim};
use lmac_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `f_c(x) = w_c · x + b_c`.
struct Affine {
    w: Vec<Vec<f32>>,
    b: Vec<f32>,
}

impl GradientModel for Affine {
    fn score_grads(&self, inputs: &[Vec<f32>], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f32>>)> {
        let scores = inputs
            .iter()
            .zip(classes)
            .map(|(x, &c)| self.b[c] as f64 + self.w[c].iter().zip(x).map(|(w, x)| (w * x) as f64).sum::<f64>())
            .collect();
        Ok((scores, classes.iter().map(|&c| self.w[c].clone()).collect()))
    }
}

fn affine() -> Affine {
    Affine {
        w: vec![vec![0.5, -2.0, 0.0, 1.5], vec![-1.0, 0.25, 3.0, 0.0]],
        b: vec![0.3, -0.7],
    }
}

#[test]
fn saliency_of_a_linear_model_is_the_absolute_weight() {
    let m = affine();
    let x = [1.0, 2.0, -3.0, 0.5];
    assert_eq!(saliency(&m, &x, 0).unwrap(), vec![0.5, 2.0, 0.0, 1.5]);
    assert_eq!(saliency(&m, &x, 1).unwrap(), vec![1.0, 0.25, 3.0, 0.0]);
}

#[test]
fn noiseless_smoothgrad_is_saliency() {
    let m = affine();
    let x = [1.0, 2.0, -3.0, 0.5];
    let cfg = SmoothGradConfig { n_samples: 5, sigma: 0.0 };
    assert_eq!(smoothgrad(&m, &x, 1, &cfg, 3).unwrap(), saliency(&m, &x, 1).unwrap());
    // A linear model's gradient ignores the noise as well.
    let noisy = SmoothGradConfig { n_samples: 5, sigma: 0.3 };
    assert_eq!(smoothgrad(&m, &x, 1, &noisy, 3).unwrap(), saliency(&m, &x, 1).unwrap());
    assert!(smoothgrad(&m, &x, 1, &SmoothGradConfig { n_samples: 0, sigma: 0.1 }, 3).is_err());
}

#[test]
fn integrated_gradients_are_exact_for_linear_models() {
    let m = affine();
    let x = [1.0f32, 2.0, -3.0, 0.5];
    let ig = integrated_gradients(&m, &x, 0, &IgConfig { n_steps: 4 }).unwrap();
    let expected: Vec<f32> = m.w[0].iter().zip(&x).map(|(w, x)| w * x).collect();
    assert_eq!(ig, expected);
    let (f, _) = m.score_grads(&[x.to_vec(), vec![0.0; 4]], &[0, 0]).unwrap();
    let total: f64 = ig.iter().map(|&v| v as f64).sum();
    assert!((total - (f[0] - f[1])).abs() < 1e-6);
    assert!(integrated_gradients(&m, &x, 0, &IgConfig { n_steps: 1 }).is_err());
}

#[test]
fn classifier_input_gradients_match_finite_differences() {
    let classifier = Classifier::new(ClassifierConfig::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let frames = 64;
    let model = ClassifierScore::new(&classifier, frames);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f32> = (0..40 * frames).map(|_| r.gen_range(-8.0..1.0)).collect();
    let class = 2;
    let (_, grads) = model.score_grads(&[x.clone()], &[class]).unwrap();

    let c64 = classifier.cast::<f64>();
    let score = |x: &[f64]| -> f64 {
        let t = Tensor::new(x.to_vec(), &[1, 1, 40, frames]).unwrap();
        c64.forward(&t).unwrap().logits.to_vec()[class]
    };
    let base: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let h = 1e-4;
    for _ in 0..6 {
        let i = r.gen_range(0..base.len());
        let (mut up, mut down) = (base.clone(), base.clone());
        up[i] += h;
        down[i] -= h;
        let numeric = (score(&up) - score(&down)) / (2.0 * h);
        let analytic = grads[0][i] as f64;
        assert!((analytic - numeric).abs() <= 1e-3 * numeric.abs().max(1e-2), "coord {i}: {analytic} vs {numeric}");
    }
}

#[test]
fn gradcam_weights_channels_by_mean_gradient() {
    // Channel 0 pulls up, channel 1 pulls down.
    let act = [1.0, 2.0, 3.0, 4.0, 4.0, 0.0, 0.0, 0.0];
    let grads = [1.0, 1.0, 1.0, 1.0, -0.5, -0.5, -0.5, -0.5];
    let cam = gradcam_map(&act, &grads, (2, 2, 2), (2, 2)).unwrap();
    // 1·[1,2,3,4] − 0.5·[4,0,0,0] = [-1,2,3,4], clipped and scaled.
    assert_eq!(cam, vec![0.0, 0.5, 0.75, 1.0]);
    assert!(gradcam_map(&act, &grads[..4], (2, 2, 2), (2, 2)).is_err());
    let negative = gradcam_map(&act[..4], &[-1.0; 4], (1, 2, 2), (5, 7)).unwrap();
    assert_eq!(negative, vec![0.0; 35]);
}

#[test]
fn max_normalize_scales_absolute_values() {
    assert_eq!(max_normalize(&[-2.0, 1.0, 0.5]), vec![1.0, 0.5, 0.25]);
    assert_eq!(max_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
}

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(0.0..1.0)).collect()
}

#[test]
fn ssim_identity_and_symmetry() {
    let (rows, cols) = (20, 30);
    let a = noise(rows * cols, 1);
    let b = noise(rows * cols, 2);
    assert!((ssim(&a, &a, rows, cols).unwrap() - 1.0).abs() < 1e-12);
    let (ab, ba) = (ssim(&a, &b, rows, cols).unwrap(), ssim(&b, &a, rows, cols).unwrap());
    assert!((ab - ba).abs() < 1e-12);
    assert!(ab < 0.2, "independent noise ssim {ab}");
    assert!(ssim(&a, &b[..10], rows, cols).is_err());
}

#[test]
fn ssim_of_a_checkerboard_and_its_inverse_is_negative() {
    let (rows, cols) = (14, 14);
    let board: Vec<f32> = (0..rows * cols).map(|i| ((i / cols + i % cols) % 2) as f32).collect();
    let inverse: Vec<f32> = board.iter().map(|v| 1.0 - v).collect();
    let s = ssim(&board, &inverse, rows, cols).unwrap();
    assert!(s < -0.9, "{s}");
    // Scaling both maps together leaves the score unchanged.
    let scaled: Vec<f32> = board.iter().map(|v| 4.0 * v + 1.0).collect();
    assert!((ssim(&scaled, &scaled, rows, cols).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn ablation_removes_the_top_ranked_share() {
    let values = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let attr = [0.1f32, 0.9, 0.5, 0.5, 0.0, 0.7, 0.2, 0.5];
    assert_eq!(ablate(&values, &attr, 0.0).unwrap(), values.to_vec());
    assert_eq!(ablate(&values, &attr, 100.0).unwrap(), vec![0.0; 8]);
    // Top 3: 0.9 at 1, 0.7 at 5, then the tie at 0.5 goes to index 2.
    assert_eq!(ablate(&values, &attr, 37.5).unwrap(), vec![1.0, 0.0, 0.0, 4.0, 5.0, 0.0, 7.0, 8.0]);
    assert!(ablate(&values, &attr[..4], 50.0).is_err());
}
