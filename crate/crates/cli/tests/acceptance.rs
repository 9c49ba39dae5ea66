//! End-to-end acceptance suite. Prints one line per criterion and fails if
//! any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::time::Instant;

use lmac_audio::{istft, measured_snr_db, mix_at_snr, stft, wav_read, wav_write, AudioClip, StftParams, SAMPLE_RATE};
use lmac_autograd::{concat_channels, conv2d, conv_transpose2d, pool2d, resize_bilinear, PoolKind, Tensor};
use lmac_cli::commands::{interpret_cmd, per_class};
use lmac_cli::RunConfig;
use lmac_core::attribution::{Attributor, EvalSet, Method};
use lmac_core::baselines::{integrated_gradients, BaselineConfig, ClassifierScore, GradientModel, IgConfig};
use lmac_core::interpret::{
    finetune_interpreter, train_interpreter, InterpretationSet, InterpreterTrainConfig, MaskLossConfig,
};
use lmac_core::metrics::{evaluate, Domain, EvalOptions, MetricsReport, ScoreModel, ScoreTable, StftModel};
use lmac_core::models::{
    save_classifier, save_decoder, train_classifier, Classifier, ClassifierConfig, ClassifierTrainConfig, Decoder,
    DecoderConfig, FeatureSet,
};
use lmac_core::sanity::{cascading_randomization, roar, RoarConfig, RoarData};
use lmac_core::synth::{build_dataset, Contamination, Dataset, DatasetConfig, SynthKind};
use lmac_core::Frontend;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ncc(a: &[f32], b: &[f32]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let aa: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum();
    let bb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum();
    ab / (aa * bb).sqrt()
}

// ---------------------------------------------------------------- 1

type Op = Box<dyn Fn(&[Tensor<f64>]) -> lmac_autograd::Result<Tensor<f64>>>;

/// Worst relative error between reverse-mode and central-difference
/// gradients of `<f(inputs), p>` for a random projection `p`.
fn grad_error(inputs: &[(Vec<f64>, Vec<usize>)], f: &Op, seed: u64) -> f64 {
    let h = 1e-4;
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|(d, s)| Tensor::param(d.clone(), s).unwrap()).collect();
    let out = f(&leaves).unwrap();
    let proj = uniform(&mut rng(seed), out.numel(), -1.0, 1.0);
    let p = Tensor::new(proj.clone(), out.shape()).unwrap();
    out.mul(&p).unwrap().sum().unwrap().backward().unwrap();
    let eval = |ts: &[Tensor<f64>]| dot(f(ts).unwrap().data(), &proj);
    let mut worst: f64 = 0.0;
    for (i, (data, _)) in inputs.iter().enumerate() {
        let analytic = leaves[i].grad().unwrap_or_else(|| vec![0.0; data.len()]);
        let numeric: Vec<f64> = (0..data.len())
            .map(|j| {
                let shifted = |delta: f64| {
                    let ts: Vec<Tensor<f64>> = inputs
                        .iter()
                        .enumerate()
                        .map(|(k, (d, s))| {
                            let mut d = d.clone();
                            if k == i {
                                d[j] += delta;
                            }
                            Tensor::new(d, s).unwrap()
                        })
                        .collect();
                    eval(&ts)
                };
                (shifted(h) - shifted(-h)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = dot(&analytic, &analytic).sqrt().max(dot(&numeric, &numeric).sqrt()).max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}

fn autodiff_oracle() -> Verdict {
    let mut r = rng(1);
    let t = |r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64| (uniform(r, shape.iter().product(), lo, hi), shape.to_vec());
    // Away from the kinks of relu and abs.
    let mut a = t(&mut r, &[3, 4], -2.0, 2.0);
    a.0.iter_mut().filter(|v| v.abs() < 0.05).for_each(|v| *v += 0.2);
    let b = t(&mut r, &[3, 4], -2.0, 2.0);
    let pos = t(&mut r, &[3, 4], 0.2, 3.0);
    let mut pool_in: Vec<f64> = (0..96).map(|i| i as f64 * 0.01).collect();
    for i in (1..pool_in.len()).rev() {
        pool_in.swap(i, r.gen_range(0..=i));
    }
    let pool_in = (pool_in, vec![2, 2, 4, 6]);
    let img = t(&mut r, &[1, 2, 5, 5], -1.0, 1.0);
    let w = t(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
    let bias3 = t(&mut r, &[3], -1.0, 1.0);
    let small = t(&mut r, &[2, 3, 3, 2], -1.0, 1.0);
    let wt = t(&mut r, &[3, 2, 2, 2], -1.0, 1.0);
    let bias2 = t(&mut r, &[2], -1.0, 1.0);
    let logits = t(&mut r, &[2, 5], -2.0, 2.0);
    let m34 = t(&mut r, &[4, 2], -1.0, 1.0);
    let batch = t(&mut r, &[2, 4, 3], -1.0, 1.0);
    let one_ch = t(&mut r, &[2, 1, 4, 6], -1.0, 1.0);

    let cases: Vec<(&str, Vec<(Vec<f64>, Vec<usize>)>, Op)> = vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|x| x[0].add(&x[1]))),
        ("sub", vec![a.clone(), b.clone()], Box::new(|x| x[0].sub(&x[1]))),
        ("mul", vec![a.clone(), b.clone()], Box::new(|x| x[0].mul(&x[1]))),
        ("scale", vec![a.clone()], Box::new(|x| x[0].scale(-1.7))),
        ("add_scalar", vec![a.clone()], Box::new(|x| x[0].add_scalar(0.3))),
        ("one_minus", vec![a.clone()], Box::new(|x| x[0].one_minus())),
        ("square", vec![a.clone()], Box::new(|x| x[0].square())),
        ("relu", vec![a.clone()], Box::new(|x| x[0].relu())),
        ("sigmoid", vec![a.clone()], Box::new(|x| x[0].sigmoid())),
        ("exp", vec![a.clone()], Box::new(|x| x[0].exp())),
        ("abs", vec![a.clone()], Box::new(|x| x[0].abs())),
        ("log", vec![pos], Box::new(|x| x[0].log())),
        ("sum", vec![a.clone()], Box::new(|x| x[0].sum())),
        ("mean", vec![a.clone()], Box::new(|x| x[0].mean())),
        ("reshape", vec![a.clone()], Box::new(|x| x[0].reshape(&[4, 3])?.square())),
        ("matmul", vec![a.clone(), m34], Box::new(|x| x[0].matmul(&x[1]))),
        ("matmul_batched", vec![a, batch], Box::new(|x| x[0].matmul_batched(&x[1]))),
        ("conv2d", vec![img.clone(), w.clone(), bias3.clone()], Box::new(|x| conv2d(&x[0], &x[1], Some(&x[2]), 1, 1))),
        ("conv2d stride 2", vec![img, w, bias3.clone()], Box::new(|x| conv2d(&x[0], &x[1], Some(&x[2]), 2, 0))),
        (
            "conv_transpose2d",
            vec![small, wt, bias2],
            Box::new(|x| conv_transpose2d(&x[0], &x[1], Some(&x[2]), 2, 0)),
        ),
        ("max_pool", vec![pool_in.clone()], Box::new(|x| pool2d(PoolKind::Max, &x[0], (2, 2), (2, 2)))),
        ("avg_pool", vec![pool_in.clone()], Box::new(|x| pool2d(PoolKind::Avg, &x[0], (2, 2), (2, 2)))),
        ("spatial_mean", vec![pool_in.clone()], Box::new(|x| x[0].spatial_mean())),
        ("add_channel_bias", vec![pool_in.clone(), (vec![0.3, -0.2], vec![2])], Box::new(|x| x[0].add_channel_bias(&x[1]))),
        ("resize_bilinear", vec![pool_in.clone()], Box::new(|x| resize_bilinear(&x[0], (7, 13)))),
        (
            "concat_channels",
            vec![pool_in, one_ch],
            Box::new(|x| concat_channels(&[x[0].clone(), x[1].clone()])?.square()),
        ),
        ("log_softmax", vec![logits.clone()], Box::new(|x| x[0].log_softmax())),
        ("nll_loss", vec![logits.clone()], Box::new(|x| x[0].log_softmax()?.nll_loss(&[3, 1]))),
        ("gather_rows", vec![logits], Box::new(|x| x[0].log_softmax()?.exp()?.gather_rows(&[0, 4]))),
    ];
    let mut worst = (0.0, "");
    for (i, (name, inputs, f)) in cases.iter().enumerate() {
        let e = grad_error(inputs, f, 100 + i as u64);
        if e > worst.0 {
            worst = (e, name);
        }
    }
    let ops_ok = worst.0 < 1e-4;

    // Through both full networks, along a random direction in parameter space.
    let net_err = network_direction_error();
    let net_ok = net_err < 1e-3;

    // <J v, u> = <v, Jᵀu> for the linear ops.
    let mut adj_worst: f64 = 0.0;
    type Lin = fn(&Tensor<f64>) -> lmac_autograd::Result<Tensor<f64>>;
    let linear: [(Vec<usize>, Lin); 4] = [
        (vec![1, 2, 5, 7], |t| resize_bilinear(t, (12, 3))),
        (vec![1, 2, 6, 8], |t| pool2d(PoolKind::Avg, t, (2, 2), (2, 2))),
        (vec![1, 2, 4, 4], |t| {
            let w = Tensor::new((0..54).map(|i| (i as f64 * 0.37).sin()).collect(), &[2, 3, 3, 3])?;
            conv_transpose2d(t, &w, None, 2, 1)
        }),
        (vec![1, 2, 6, 6], |t| {
            let w = Tensor::new((0..54).map(|i| (i as f64 * 0.61).cos()).collect(), &[3, 2, 3, 3])?;
            conv2d(t, &w, None, 2, 1)
        }),
    ];
    for (shape, op) in linear {
        let v = Tensor::param(uniform(&mut r, shape.iter().product(), -1.0, 1.0), &shape).unwrap();
        let jv = op(&v).unwrap();
        let u = Tensor::new(uniform(&mut r, jv.numel(), -1.0, 1.0), jv.shape()).unwrap();
        jv.mul(&u).unwrap().sum().unwrap().backward().unwrap();
        adj_worst = adj_worst.max((dot(jv.data(), u.data()) - dot(v.data(), &v.grad().unwrap())).abs());
    }
    let adj_ok = adj_worst < 1e-5;
    verdict(
        ops_ok && net_ok && adj_ok,
        format!(
            "{} ops worst rel err {:.1e} ({}), networks {net_err:.1e}, adjoint gap {adj_worst:.1e}",
            cases.len(),
            worst.0,
            worst.1
        ),
    )
}

/// Directional derivative of a classifier + decoder loss against central differences.
fn network_direction_error() -> f64 {
    let fe = Frontend::default();
    let clf = Classifier::<f32>::new(ClassifierConfig::default(), &mut rng(2)).unwrap().cast::<f64>();
    let dec = Decoder::<f32>::new(DecoderConfig::default(), &mut rng(3)).unwrap().cast::<f64>();
    let mut r = rng(4);
    let (f, t) = (257, 64);
    let x = Tensor::new(uniform(&mut r, f * t, 0.0, 2.0), &[1, f, t]).unwrap();
    let loss = |clf: &Classifier<f64>, dec: &Decoder<f64>| {
        let feats = fe.filterbank.log_mel(&x).unwrap().reshape(&[1, 1, 40, t]).unwrap();
        let out = clf.forward(&feats).unwrap();
        let mask = dec.forward(&out.latents, t).unwrap();
        out.logits.log_softmax().unwrap().nll_loss(&[2]).unwrap().add(&mask.mean().unwrap()).unwrap()
    };
    let (cp, dp) = (clf.parameters(), dec.parameters());
    loss(&clf, &dec).backward().unwrap();
    let dirs: Vec<Vec<f64>> = cp.iter().chain(&dp).map(|p| uniform(&mut r, p.numel(), -1.0, 1.0)).collect();
    let analytic: f64 = cp
        .iter()
        .chain(&dp)
        .zip(&dirs)
        .map(|(p, d)| dot(&p.grad().unwrap_or_else(|| vec![0.0; p.numel()]), d))
        .sum();
    let shifted = |eps: f64| {
        let mv = |ps: &[Tensor<f64>], ds: &[Vec<f64>]| -> Vec<Tensor<f64>> {
            ps.iter()
                .zip(ds)
                .map(|(p, d)| {
                    let v: Vec<f64> = p.data().iter().zip(d).map(|(a, b)| a + eps * b).collect();
                    Tensor::param(v, p.shape()).unwrap()
                })
                .collect()
        };
        let (mut c, mut d) = (clf.clone(), dec.clone());
        c.set_parameters(mv(&cp, &dirs[..cp.len()])).unwrap();
        d.set_parameters(mv(&dp, &dirs[cp.len()..])).unwrap();
        loss(&c, &d).item()
    };
    let h = 1e-5;
    let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

// ---------------------------------------------------------------- 2

fn dsp_oracle() -> Verdict {
    let params = StftParams::default();
    let mut r = rng(7);
    let mut worst = 0f32;
    for _ in 0..100 {
        let clip = AudioClip::new((0..SAMPLE_RATE as usize).map(|_| r.gen_range(-0.9f32..0.9)).collect());
        let back = istft(&stft(&clip, &params).unwrap()).unwrap();
        if back.len() != clip.len() {
            return verdict(false, format!("length {} vs {}", back.len(), clip.len()));
        }
        for (a, b) in back.samples.iter().zip(&clip.samples) {
            worst = worst.max((a - b).abs());
        }
    }
    let signal = AudioClip::new(
        (0..SAMPLE_RATE as usize)
            .map(|i| (0.6 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
            .collect(),
    );
    let noise = AudioClip::new((0..SAMPLE_RATE as usize).map(|_| r.gen_range(-0.9f32..0.9)).collect());
    let mut snr_worst: f64 = 0.0;
    for step in 0..=100 {
        let target = -10.0 + 0.5 * step as f64;
        let mix = mix_at_snr(&signal, &noise, target).unwrap();
        snr_worst = snr_worst.max((measured_snr_db(mix.clean_reference.as_ref().unwrap(), &mix.samples) - target).abs());
    }
    verdict(
        worst < 1e-5 && snr_worst < 0.01,
        format!("round trip max err {worst:.1e} on 100 clips, SNR max dev {snr_worst:.1e} dB over [-10, 40]"),
    )
}

// ---------------------------------------------------------------- 7

struct Linear;

const W: [[f64; 3]; 2] = [[1.0, 2.0, -1.0], [0.5, -1.0, 2.0]];

fn lin(x: &[f32]) -> [f64; 2] {
    let d = |w: &[f64; 3]| w.iter().zip(x).map(|(w, &x)| w * x as f64).sum::<f64>();
    [d(&W[0]), d(&W[1])]
}

impl ScoreModel for Linear {
    fn logits(&self, inputs: &[&[f32]]) -> lmac_core::Result<Vec<Vec<f64>>> {
        Ok(inputs.iter().map(|x| lin(x).to_vec()).collect())
    }
}

fn metric_oracles() -> Verdict {
    let inputs = vec![
        vec![1.0f32, 2.0, 3.0],
        vec![2.0, 0.5, 0.1],
        vec![0.2, 3.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ];
    let masks = vec![
        vec![1.0f32, 0.0, 0.5],
        vec![0.2, 0.9, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![1.0, 1.0, 1.0],
    ];
    let n = inputs.len() as f64;
    let prob = |l: [f64; 2], c: usize| 1.0 / (1.0 + (l[1 - c] - l[c]).exp());
    let (mut ai, mut ad, mut ag, mut ff, mut fid) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, m) in inputs.iter().zip(&masks) {
        let kept: Vec<f32> = x.iter().zip(m).map(|(x, m)| x * m).collect();
        let dropped: Vec<f32> = x.iter().zip(m).map(|(x, m)| x * (1.0 - m)).collect();
        let (l, li, lo) = (lin(x), lin(&kept), lin(&dropped));
        let c = usize::from(l[1] > l[0]);
        let (p, pi, po) = (prob(l, c), prob(li, c), prob(lo, c));
        ai += if pi > p { 100.0 / n } else { 0.0 };
        ad += 100.0 * (p - pi).max(0.0) / p / n;
        ag += 100.0 * (pi - p).max(0.0) / (1.0 - p) / n;
        ff += (p - po) / n;
        fid += if usize::from(li[1] > li[0]) == c { 1.0 / n } else { 0.0 };
    }
    let (mut sps, mut comp) = (0.0, 0.0);
    for m in &masks {
        let a: Vec<f64> = m.iter().map(|&v| v as f64).collect();
        let total: f64 = a.iter().sum();
        let pairs: f64 = a.iter().flat_map(|x| a.iter().map(move |y| (x - y).abs())).sum();
        sps += pairs / (2.0 * a.len() as f64 * total) / n;
        comp += a.iter().filter(|&&v| v > 0.0).map(|&v| -(v / total) * (v / total).ln()).sum::<f64>() / n;
    }
    let mm = masks.iter().flatten().map(|&v| v as f64).sum::<f64>() / 12.0;
    let got = evaluate(&Linear, &inputs, &masks, &EvalOptions::default()).unwrap();
    let pairs = [
        ("FF", got.ff, ff),
        ("AI", got.ai, ai),
        ("AD", got.ad, ad),
        ("AG", got.ag, ag),
        ("Fid-In", got.fid_in, fid),
        ("SPS", got.sps, sps),
        ("COMP", got.comp, comp),
        ("MM", got.mm, mm),
    ];
    let worst = pairs.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bad: Vec<&str> = pairs.iter().filter(|(_, a, b)| (a - b).abs() >= 1e-6).map(|p| p.0).collect();
    verdict(bad.is_empty(), format!("8 metrics, max deviation {worst:.1e}{}", if bad.is_empty() { String::new() } else { format!(", off: {bad:?}") }))
}

// ---------------------------------------------------------------- shared models

struct Trained {
    fe: Frontend,
    data: Dataset,
    classifier: Classifier,
    test_accuracy: f64,
    test: EvalSet,
}

fn train_fixture() -> Trained {
    let fe = Frontend::default();
    let data = build_dataset(&DatasetConfig {
        train_per_class: 60,
        valid_per_class: 5,
        test_per_class: 40,
        ..Default::default()
    })
    .unwrap();
    let train = FeatureSet::from_clips(&fe, &data.train.clips).unwrap();
    let test = FeatureSet::from_clips(&fe, &data.test.clips).unwrap();
    let cfg = ClassifierTrainConfig::default();
    let (classifier, report) = train_classifier(&train, None, Some(&test), ClassifierConfig::default(), &cfg).unwrap();
    let test = EvalSet::prepare(&classifier, &fe, &data.test.clips).unwrap();
    Trained {
        fe,
        test_accuracy: report.test_accuracy.unwrap(),
        data,
        classifier,
        test,
    }
}

fn stage_one(t: &Trained) -> Decoder {
    let clips = per_class(&t.data.train.clips, Some(20));
    let set = InterpretationSet::prepare(&t.classifier, &t.fe, &clips).unwrap();
    let init = Decoder::new(DecoderConfig::default(), &mut rng(0)).unwrap();
    let cfg = InterpreterTrainConfig::default();
    train_interpreter(&t.classifier, &init, &t.fe, &set, &MaskLossConfig::default(), &cfg).unwrap().0
}

fn attributor<'a>(t: &'a Trained, decoder: Option<&'a Decoder>) -> Attributor<'a> {
    Attributor {
        classifier: &t.classifier,
        decoder,
        frontend: &t.fe,
        baselines: BaselineConfig::default(),
    }
}

fn report(t: &Trained, decoder: Option<&Decoder>, method: Method) -> MetricsReport {
    attributor(t, decoder).evaluate(method, &t.test, Domain::Stft, &EvalOptions::default()).unwrap()
}

// ---------------------------------------------------------------- 4

fn masking_mechanism(t: &Trained, decoder: &Decoder) -> Verdict {
    let att = attributor(t, Some(decoder));
    let masks = att.attributions(Method::Lmac, &t.test, Domain::Stft).unwrap();
    let model = StftModel::new(&t.classifier, &t.fe, t.test.frames());
    let table = ScoreTable::compute(&model, t.test.inputs(Domain::Stft), &masks).unwrap();
    let lmac = evaluate(&model, t.test.inputs(Domain::Stft), &masks, &EvalOptions::default()).unwrap();
    // CE(f(M⊙X), y) < CE(f((1−M)⊙X), y) is p_in > p_out for the decided class.
    let ordered = table.prob_in.iter().zip(&table.prob_out).filter(|(a, b)| a > b).count() as f64 / table.len() as f64;
    let others: Vec<(Method, f64)> = [Method::Saliency, Method::Smoothgrad, Method::Ig, Method::Random]
        .into_iter()
        .map(|m| (m, report(t, None, m).ai))
        .collect();
    let beats = others.iter().all(|(_, ai)| lmac.ai > *ai);
    let pass = lmac.fid_in >= 0.7 && beats && ordered >= 0.8 && lmac.mm < 0.5;
    let rivals: Vec<String> = others.iter().map(|(m, ai)| format!("{} {ai:.1}", m.name())).collect();
    verdict(
        pass,
        format!(
            "Fid-In {:.3}, AI {:.1} vs [{}], CE ordering {:.1}%, MM {:.3}, N {}",
            lmac.fid_in,
            lmac.ai,
            rivals.join(", "),
            100.0 * ordered,
            lmac.mm,
            table.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn finetune_tradeoff(t: &Trained, decoder: &Decoder) -> Verdict {
    let noisy = build_dataset(&DatasetConfig {
        train_per_class: 20,
        valid_per_class: 1,
        test_per_class: 1,
        contamination: Contamination::WhiteNoise,
        snr_db: 3.0,
        ..Default::default()
    })
    .unwrap();
    let set = InterpretationSet::prepare(&t.classifier, &t.fe, &noisy.train.clips).unwrap();
    let cfg = InterpreterTrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let ai: Vec<f64> = [4.0, 16.0, 32.0]
        .into_iter()
        .map(|lambda_g| {
            let loss = MaskLossConfig {
                lambda_g,
                cct: 0.6,
                ..Default::default()
            };
            let (tuned, _) = finetune_interpreter(&t.classifier, decoder, &t.fe, &set, &loss, &cfg).unwrap();
            report(t, Some(&tuned), Method::Lmac).ai
        })
        .collect();
    let tol = 2.0;
    let pass = ai[0] >= ai[1] - tol && ai[1] >= ai[2] - tol;
    verdict(pass, format!("AI at lambda_g 4/16/32: {:.2} / {:.2} / {:.2} (tolerance {tol})", ai[0], ai[1], ai[2]))
}

// ---------------------------------------------------------------- 6

fn all_ones_identities(t: &Trained) -> Verdict {
    let r = report(t, None, Method::AllOnes);
    let pass = r.ai == 0.0 && r.ad == 0.0 && r.ag == 0.0 && r.fid_in == 1.0 && r.mm == 1.0;
    verdict(pass, format!("AI {} AD {} AG {} Fid-In {} MM {}", r.ai, r.ad, r.ag, r.fid_in, r.mm))
}

// ---------------------------------------------------------------- 8

fn roar_ordering(t: &Trained, decoder: &Decoder) -> Verdict {
    let data = build_dataset(&DatasetConfig {
        train_per_class: 30,
        valid_per_class: 1,
        test_per_class: 20,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let att = attributor(t, Some(decoder));
    let train = EvalSet::prepare(&t.classifier, &t.fe, &data.train.clips).unwrap();
    let test = EvalSet::prepare(&t.classifier, &t.fe, &data.test.clips).unwrap();
    let cfg = RoarConfig {
        percents: vec![30.0, 50.0, 70.0],
        seeds: vec![0, 1, 2],
        train: ClassifierTrainConfig {
            epochs: 5,
            ..Default::default()
        },
    };
    let curve = |m: Method| {
        let mk = |s: &EvalSet, clips: &[AudioClip]| RoarData {
            frames: s.frames(),
            magnitudes: s.items.magnitudes.clone(),
            attributions: att.attributions(m, s, Domain::Stft).unwrap(),
            labels: clips.iter().map(|c| c.label.unwrap()).collect(),
        };
        roar(&t.fe, m.name(), &mk(&train, &data.train.clips), &mk(&test, &data.test.clips), &ClassifierConfig::default(), &cfg)
            .unwrap()
            .accuracy
    };
    let (lmac, random) = (curve(Method::Lmac), curve(Method::Random));
    let pass = lmac.iter().zip(&random).all(|(l, r)| l <= r);
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join("/");
    verdict(pass, format!("accuracy at 30/50/70%: lmac {} vs random {}", fmt(&lmac), fmt(&random)))
}

// ---------------------------------------------------------------- 9

fn randomization_sensitivity(t: &Trained, decoder: &Decoder) -> Verdict {
    let clips = per_class(&t.data.test.clips, Some(2));
    let set = InterpretationSet::prepare(&t.classifier, &t.fe, &clips).unwrap();
    let trace = cascading_randomization(&t.classifier, decoder, &t.fe, &set, 0).unwrap();
    let s = &trace.ssim_to_original;
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = (s[0] - 1.0).abs() < 1e-6 && min <= 0.9;
    let fmt: Vec<String> = s.iter().map(|v| format!("{v:.3}")).collect();
    verdict(pass, format!("SSIM by k: [{}], min {min:.3}", fmt.join(", ")))
}

// ---------------------------------------------------------------- 10

fn listenability(t: &Trained, decoder: &Decoder) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    save_classifier(&cfg.classifier_path(), &t.classifier).unwrap();
    save_decoder(&cfg.decoder_path(), decoder).unwrap();
    let tone = t
        .data
        .test
        .clips
        .iter()
        .find(|c| c.label == Some(SynthKind::PureTone.id()))
        .unwrap();
    let input = dir.path().join("tone.wav");
    wav_write(&input, tone).unwrap();
    let clean = wav_read(&input).unwrap();
    let started = Instant::now();
    let out = interpret_cmd(&cfg, false, &input, None, None).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let rendered = wav_read(out.join("interpretation.wav")).unwrap();
    let r = ncc(&rendered.samples, &clean.samples);
    let same_len = rendered.len() == clean.len();
    verdict(
        r > 0.9 && same_len && secs < 5.0,
        format!("NCC {r:.4}, {} vs {} samples, export {secs:.2} s", rendered.len(), clean.len()),
    )
}

// ---------------------------------------------------------------- 11

fn ig_completeness(t: &Trained) -> Verdict {
    let model = ClassifierScore::new(&t.classifier, t.test.frames());
    let mut worst: f64 = 0.0;
    let items = per_class(&t.data.test.clips, Some(1));
    let set = EvalSet::prepare(&t.classifier, &t.fe, &items).unwrap();
    for (x, &c) in set.features.iter().zip(&set.items.labels) {
        let attr = integrated_gradients(&model, x, c, &IgConfig { n_steps: 128 }).unwrap();
        let baseline = vec![0.0; x.len()];
        let (f, _) = model.score_grads(&[x.clone(), baseline], &[c, c]).unwrap();
        let total: f64 = attr.iter().map(|&v| v as f64).sum();
        worst = worst.max((total - (f[0] - f[1])).abs() / (f[0] - f[1]).abs());
    }
    verdict(worst <= 0.02, format!("worst relative gap {:.2}% over {} items at 128 steps", 100.0 * worst, set.len()))
}

// ---------------------------------------------------------------- runner

struct Runner {
    selected: Vec<u32>,
    failed: u32,
}

impl Runner {
    fn wants(&self, id: u32) -> bool {
        self.selected.is_empty() || self.selected.contains(&id)
    }

    fn run(&mut self, id: u32, name: &str, budget_secs: f64, f: impl FnOnce() -> Verdict) {
        self.run_after(id, name, budget_secs, 0.0, f)
    }

    /// `setup_secs` is time already spent on shared training that counts toward the budget.
    fn run_after(&mut self, id: u32, name: &str, budget_secs: f64, setup_secs: f64, f: impl FnOnce() -> Verdict) {
        if !self.wants(id) {
            return;
        }
        let started = Instant::now();
        let v = f();
        let secs = setup_secs + started.elapsed().as_secs_f64();
        let pass = v.pass && secs < budget_secs;
        if !pass {
            self.failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} [{secs:.1} s, budget {budget_secs:.0} s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut r = Runner { selected, failed: 0 };
    r.run(1, "autodiff oracle", 30.0, autodiff_oracle);
    r.run(2, "DSP oracle", 10.0, dsp_oracle);
    r.run(7, "metric oracles", 1.0, metric_oracles);

    let needs_models = [3, 4, 5, 6, 8, 9, 10, 11].iter().any(|&i| r.wants(i));
    if !needs_models {
        finish(r.failed);
    }
    let started = Instant::now();
    let t = train_fixture();
    let train_secs = started.elapsed().as_secs_f64();
    r.run_after(3, "classifier quality", 300.0, train_secs, || {
        verdict(
            t.test_accuracy >= 0.9,
            format!("test accuracy {:.4} after 15 epochs", t.test_accuracy),
        )
    });
    r.run(11, "IG completeness", 30.0, || ig_completeness(&t));
    r.run(6, "all-ones identities", 60.0, || all_ones_identities(&t));

    if ![4, 5, 8, 9, 10].iter().any(|&i| r.wants(i)) {
        finish(r.failed);
    }
    let started = Instant::now();
    let decoder = stage_one(&t);
    let stage_secs = started.elapsed().as_secs_f64();
    r.run_after(4, "masking mechanism", 600.0, stage_secs, || masking_mechanism(&t, &decoder));
    r.run(10, "listenability", 5.0, || listenability(&t, &decoder));
    r.run(9, "randomisation sensitivity", 300.0, || randomization_sensitivity(&t, &decoder));
    r.run(5, "fine-tuning trade-off", 900.0, || finetune_tradeoff(&t, &decoder));
    r.run(8, "ROAR ordering", 1200.0, || roar_ordering(&t, &decoder));
    finish(r.failed);
}

fn finish(failed: u32) -> ! {
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all selected criteria passed");
    std::process::exit(0);
}
