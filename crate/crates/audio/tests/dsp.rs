use std::f64::consts::PI;

use lmac_audio::{
    istft, measured_snr_db, mel_features, mix_at_snr, stft, synthesize_interpretation, wav_read, wav_write,
    AudioClip, MelFilterbank, MelParams, StftParams, SAMPLE_RATE,
};
use lmac_autograd::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_clip(rng: &mut ChaCha8Rng, n: usize) -> AudioClip {
    AudioClip::new((0..n).map(|_| rng.gen_range(-0.9f32..0.9)).collect())
}

fn sine(freq: f64, n: usize) -> AudioClip {
    AudioClip::new(
        (0..n)
            .map(|i| (0.6 * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
            .collect(),
    )
}

fn ncc(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn istft_inverts_stft_on_random_clips() {
    let params = StftParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f32;
    for _ in 0..100 {
        let clip = noise_clip(&mut rng, SAMPLE_RATE as usize);
        let back = istft(&stft(&clip, &params).unwrap()).unwrap();
        assert_eq!(back.len(), clip.len());
        let half = params.n_fft / 2;
        for i in half..clip.len() - half {
            worst = worst.max((back.samples[i] - clip.samples[i]).abs());
        }
    }
    assert!(worst < 1e-5, "max round-trip error {worst}");
}

#[test]
fn all_ones_interpretation_is_identity() {
    let params = StftParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let clip = noise_clip(&mut rng, 20_000);
    let spec = stft(&clip, &params).unwrap();
    let ones = Tensor::full(spec.magnitude.shape(), 1.0);
    let a = synthesize_interpretation(&ones, &spec).unwrap();
    let b = istft(&spec).unwrap();
    assert_eq!(a.samples, b.samples);
    for i in 256..clip.len() - 256 {
        assert!((a.samples[i] - clip.samples[i]).abs() < 1e-5);
    }
    let zeros = Tensor::zeros(spec.magnitude.shape());
    assert!(synthesize_interpretation(&zeros, &spec)
        .unwrap()
        .samples
        .iter()
        .all(|&s| s == 0.0));
}

#[test]
fn single_row_mask_recovers_the_sine() {
    let clip = sine(1000.0, 32_000);
    let spec = stft(&clip, &StftParams::default()).unwrap();
    let (f, t) = (spec.bins(), spec.frames());
    let mut mask = vec![0f32; f * t];
    mask[32 * t..33 * t].iter_mut().for_each(|v| *v = 1.0);
    let out = synthesize_interpretation(&Tensor::new(mask, &[f, t]).unwrap(), &spec).unwrap();
    let r = ncc(&out.samples, &clip.samples);
    assert!(r > 0.95, "ncc {r}");
}

#[test]
fn stft_energy_is_proportional_to_waveform_energy() {
    let params = StftParams::default();
    let n = params.n_fft as f64;
    let window_energy: f64 = params.window().iter().map(|w| w * w).sum();
    let expected = n * window_energy / params.hop as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let len = rng.gen_range(16_000..32_001);
        let clip = noise_clip(&mut rng, len);
        let spec = stft(&clip, &params).unwrap();
        let (f, t) = (spec.bins(), spec.frames());
        let mut spectral = 0.0;
        for k in 0..f {
            let weight = if k == 0 || k == f - 1 { 1.0 } else { 2.0 };
            for j in 0..t {
                spectral += weight * (spec.magnitude.data()[k * t + j] as f64).powi(2);
            }
        }
        let temporal: f64 = clip.samples.iter().map(|&s| (s as f64).powi(2)).sum();
        let ratio = spectral / temporal;
        assert!((ratio / expected - 1.0).abs() < 0.01, "ratio {ratio} vs {expected}");
    }
}

#[test]
fn flat_spectrum_mel_energy_tracks_filter_width() {
    let params = StftParams::default();
    let fb = MelFilterbank::new(MelParams::default(), &params).unwrap();
    let flat = Tensor::<f32>::full(&[1, 257, 1], 1.0);
    let energy = fb.log_mel(&flat).unwrap();
    // Analytic widths: filters widen monotonically on the mel scale, and with
    // a flat input the energy is the filter's weight sum.
    let mut prev = f32::NEG_INFINITY;
    for m in 0..40 {
        let row_sum: f64 = fb.weights()[m * 257..(m + 1) * 257].iter().sum();
        let e = energy.data()[m];
        assert!((e as f64 - (row_sum + 1e-10).ln()).abs() < 1e-4);
        if m >= 3 {
            // The lowest filters are narrower than the bin spacing, so
            // sampling noise dominates there.
            assert!(e >= prev - 1e-3, "filter {m}: {e} < {prev}");
        }
        prev = e;
    }
}

#[test]
fn mel_features_of_silence_are_the_floor() {
    let params = StftParams::default();
    let fb = MelFilterbank::new(MelParams::default(), &params).unwrap();
    let spec = stft(&AudioClip::new(vec![0.0; 4000]), &params).unwrap();
    let mel = mel_features(&spec, &fb).unwrap();
    assert_eq!(mel.values.shape(), &[40, spec.frames()]);
    let floor = (1e-10f64).ln() as f32;
    assert!(mel.values.data().iter().all(|&v| (v - floor).abs() < 1e-4));
}

#[test]
fn wav_round_trip_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.wav");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let clip = AudioClip::new((0..16000).map(|_| rng.gen_range(-1.0f32..=1.0)).collect());
    wav_write(&path, &clip).unwrap();
    let back = wav_read(&path).unwrap();
    assert_eq!(back.len(), clip.len());
    let worst = back
        .samples
        .iter()
        .zip(&clip.samples)
        .fold(0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst <= 2f32.powi(-15), "{worst}");
}

#[test]
fn snr_mixer_hits_target_across_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let signal = sine(440.0, 16000);
    let noise = noise_clip(&mut rng, 16000);
    for snr in -10..=40 {
        let mix = mix_at_snr(&signal, &noise, snr as f64).unwrap();
        let got = measured_snr_db(mix.clean_reference.as_ref().unwrap(), &mix.samples);
        assert!((got - snr as f64).abs() < 0.01, "target {snr} got {got}");
        assert!(mix.samples.iter().all(|s| s.abs() <= 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mel_energy_is_monotone_in_magnitude(seed in 0u64..10_000) {
        let fb = MelFilterbank::new(MelParams::default(), &StftParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small: Vec<f32> = (0..257 * 4).map(|_| rng.gen_range(0.0..2.0)).collect();
        let large: Vec<f32> = small.iter().map(|&v| v + rng.gen_range(0.0..1.0)).collect();
        let a = fb.log_mel(&Tensor::new(small, &[1, 257, 4]).unwrap()).unwrap();
        let b = fb.log_mel(&Tensor::new(large, &[1, 257, 4]).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(y >= x);
        }
    }

    #[test]
    fn snr_is_exact_for_any_target(snr in -10.0f64..40.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = noise_clip(&mut rng, 4000);
        let noise = noise_clip(&mut rng, 1500);
        let mix = mix_at_snr(&signal, &noise, snr).unwrap();
        let got = measured_snr_db(mix.clean_reference.as_ref().unwrap(), &mix.samples);
        prop_assert!((got - snr).abs() < 0.01);
    }
}
