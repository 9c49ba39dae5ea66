//! One function per subcommand. Each checks its prerequisites, persists the
//! run config, then does the work.

use std::fs;
use std::path::{Path, PathBuf};

use lmac_audio::{wav_read, wav_write, AudioClip};
use lmac_core::attribution::{Attributor, EvalSet, Method};
use lmac_core::interpret::{
    finetune_interpreter, interpret_clip, log_lines, train_interpreter, InterpretationSet, InterpreterTrainConfig,
};
use lmac_core::metrics::{Domain, MetricsReport};
use lmac_core::models::{
    load_classifier, load_decoder, save_classifier, save_decoder, train_classifier, Classifier, ClassifierConfig,
    Decoder, DecoderConfig, FeatureSet,
};
use lmac_core::plot::{line_chart, Series};
use lmac_core::sanity::{cascading_randomization, roar, RoarCurve, RoarData};
use lmac_core::synth::{build_dataset, child_seed, make_ood_mixtures, read_dataset, write_dataset, Dataset, SynthKind, MANIFEST};
use lmac_core::Frontend;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::export::write_mask_png;

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{what} required: {} not found", path.display())))
    }
}

/// Refuses to overwrite an existing artifact unless forced.
fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.data_dir();
    require(&dir.join(MANIFEST), "dataset")?;
    Ok(read_dataset(&dir)?)
}

fn classifier(cfg: &RunConfig) -> Result<Classifier> {
    let path = cfg.classifier_path();
    require(&path, "classifier checkpoint")?;
    Ok(load_classifier(&path)?)
}

fn decoder(path: &Path) -> Result<Decoder> {
    require(path, "decoder checkpoint")?;
    Ok(load_decoder(path)?)
}

/// The first `n` clips of every class, in dataset order.
pub fn per_class(clips: &[AudioClip], n: Option<usize>) -> Vec<AudioClip> {
    let Some(n) = n else { return clips.to_vec() };
    let mut seen = [0usize; lmac_core::synth::NUM_CLASSES];
    clips
        .iter()
        .filter(|c| {
            let slot = &mut seen[c.label.unwrap_or(0)];
            *slot += 1;
            *slot <= n
        })
        .cloned()
        .collect()
}

pub fn synth(cfg: &RunConfig, force: bool) -> Result<()> {
    let dir = cfg.data_dir();
    let occupied = fs::read_dir(&dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !force {
        return Err(CliError::Usage(format!("{} is not empty; pass --force to overwrite", dir.display())));
    }
    cfg.persist("synth")?;
    let data = build_dataset(&cfg.data)?;
    write_dataset(&dir, &data)?;
    println!(
        "wrote {} train, {} valid, {} test clips to {}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        dir.display()
    );
    Ok(())
}

pub fn train_classifier_cmd(cfg: &RunConfig, force: bool) -> Result<()> {
    let out = cfg.classifier_path();
    guard(&out, force)?;
    let data = load_data(cfg)?;
    cfg.persist("train-classifier")?;
    let fe = Frontend::default();
    let train = FeatureSet::from_clips(&fe, &data.train.clips)?;
    let valid = FeatureSet::from_clips(&fe, &data.valid.clips)?;
    let test = FeatureSet::from_clips(&fe, &data.test.clips)?;
    let (model, report) = train_classifier(&train, Some(&valid), Some(&test), ClassifierConfig::default(), &cfg.classifier)?;
    save_classifier(&out, &model)?;
    let mut log = String::new();
    for e in &report.epochs {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
    }
    fs::write(cfg.output_dir.join("classifier_log.jsonl"), log)?;
    write_json(&cfg.output_dir.join("classifier_report.json"), &report)?;
    println!(
        "classifier: valid accuracy {:.4}, test accuracy {:.4}",
        report.valid_accuracy.unwrap_or(f64::NAN),
        report.test_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn train_interpreter_cmd(cfg: &RunConfig, force: bool) -> Result<()> {
    let out = cfg.decoder_path();
    let clf = classifier(cfg)?;
    guard(&out, force)?;
    let data = load_data(cfg)?;
    cfg.persist("train-interpreter")?;
    let fe = Frontend::default();
    let set = InterpretationSet::prepare(&clf, &fe, &per_class(&data.train.clips, cfg.interpreter_per_class))?;
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, 21, 0));
    let init = Decoder::new(DecoderConfig::default(), &mut rng)?;
    let (dec, log) = train_interpreter(&clf, &init, &fe, &set, &cfg.loss, &cfg.interpreter)?;
    save_decoder(&out, &dec)?;
    fs::write(cfg.output_dir.join("interpreter_log.jsonl"), log_lines(&log)?)?;
    if let Some(last) = log.last() {
        println!("decoder: final loss {:.4}, mask mean {:.4}", last.mean_loss, last.mask_mean);
    }
    Ok(())
}

pub fn finetune_cmd(cfg: &RunConfig, force: bool, stage1: Option<&Path>) -> Result<()> {
    let out = cfg.finetuned_path();
    let clf = classifier(cfg)?;
    let dec = decoder(stage1.unwrap_or(&cfg.decoder_path()))?;
    guard(&out, force)?;
    let data = load_data(cfg)?;
    cfg.persist("finetune")?;
    let fe = Frontend::default();
    let set = InterpretationSet::prepare(&clf, &fe, &per_class(&data.train.clips, cfg.interpreter_per_class))?;
    let train_cfg = InterpreterTrainConfig {
        epochs: cfg.finetune.epochs,
        ..cfg.interpreter.clone()
    };
    let (tuned, log) = finetune_interpreter(&clf, &dec, &fe, &set, &cfg.finetune_loss(), &train_cfg)?;
    save_decoder(&out, &tuned)?;
    fs::write(cfg.output_dir.join("finetune_log.jsonl"), log_lines(&log)?)?;
    if let Some(last) = log.last() {
        println!(
            "fine-tuned decoder: lambda_g {} cct {}, gated fraction {:.3}, mask mean {:.4}",
            cfg.finetune.lambda_g, cfg.finetune.cct, last.gated_fraction, last.mask_mean
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Prediction {
    pub input: String,
    pub predicted: usize,
    pub class_name: String,
    pub probability: f64,
    pub mask_mean: f64,
}

pub fn interpret_cmd(
    cfg: &RunConfig,
    force: bool,
    input: &Path,
    decoder_path: Option<&Path>,
    hard_threshold: Option<f32>,
) -> Result<PathBuf> {
    let clf = classifier(cfg)?;
    let dec = decoder(decoder_path.unwrap_or(&cfg.decoder_path()))?;
    require(input, "input audio")?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
    let dir = cfg.output_dir.join("interpret").join(stem);
    guard(&dir.join("prediction.json"), force)?;
    cfg.persist("interpret")?;
    let clip = wav_read(input)?;
    let fe = Frontend::default();
    let it = interpret_clip(&clf, &dec, &fe, &clip, hard_threshold)?;
    fs::create_dir_all(&dir)?;
    wav_write(dir.join("interpretation.wav"), &it.waveform)?;
    lmac_autograd::checkpoint::save(dir.join("mask.lmt1"), &[("mask".to_string(), it.mask.clone())])?;
    let &[bins, frames] = it.mask.shape() else { unreachable!("masks are [F, T]") };
    write_mask_png(&dir.join("mask.png"), it.mask.data(), bins, frames)?;
    let prediction = Prediction {
        input: input.display().to_string(),
        predicted: it.predicted,
        class_name: SynthKind::from_id(it.predicted)?.name().to_string(),
        probability: it.probability,
        mask_mean: it.mask_mean(),
    };
    if !prediction.probability.is_finite() || !prediction.mask_mean.is_finite() {
        return Err(CliError::Numeric("interpretation produced a non-finite value".into()));
    }
    write_json(&dir.join("prediction.json"), &prediction)?;
    println!(
        "{}: class {} ({}) p={:.4}, mask mean {:.4}",
        input.display(),
        prediction.predicted,
        prediction.class_name,
        prediction.probability,
        prediction.mask_mean
    );
    Ok(dir)
}

#[derive(Debug, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub domain: Domain,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

fn check_finite(r: &MetricsReport, method: Method) -> Result<()> {
    let values = [r.ai, r.ad, r.ag, r.ff, r.fid_in, r.sps, r.comp, r.mm];
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("{} metrics are not finite: {values:?}", method.name())))
    }
}

pub fn evaluate_cmd(cfg: &RunConfig, force: bool, decoder_path: Option<&Path>) -> Result<Vec<MethodReport>> {
    let clf = classifier(cfg)?;
    let methods = &cfg.eval.methods;
    let dec = if methods.contains(&Method::Lmac) {
        Some(decoder(decoder_path.unwrap_or(&cfg.decoder_path()))?)
    } else {
        None
    };
    let domain = cfg.eval.domain;
    let stem = format!("metrics_{}{}", domain.name(), if cfg.eval.ood { "_ood" } else { "" });
    let dir = cfg.output_dir.join("eval");
    guard(&dir.join(format!("{stem}.json")), force)?;
    let data = load_data(cfg)?;
    cfg.persist("evaluate")?;
    let fe = Frontend::default();
    let clips = if cfg.eval.ood {
        make_ood_mixtures(&data.test, &mut ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, 31, 0)))?.clips
    } else {
        data.test.clips
    };
    let set = EvalSet::prepare(&clf, &fe, &clips)?;
    let att = Attributor {
        classifier: &clf,
        decoder: dec.as_ref(),
        frontend: &fe,
        baselines: cfg.eval.baselines,
    };
    let mut reports = Vec::with_capacity(methods.len());
    let mut csv = format!("{}\n", MetricsReport::CSV_HEADER);
    for &method in methods {
        let metrics = att.evaluate(method, &set, domain, &cfg.eval.options)?;
        check_finite(&metrics, method)?;
        println!(
            "{:<10} AI {:6.2} AD {:6.2} AG {:6.2} FF {:7.4} Fid-In {:.3} SPS {:.3} COMP {:.3} MM {:.3}",
            method.name(),
            metrics.ai,
            metrics.ad,
            metrics.ag,
            metrics.ff,
            metrics.fid_in,
            metrics.sps,
            metrics.comp,
            metrics.mm
        );
        csv.push_str(&metrics.csv_row(method.name(), domain));
        csv.push('\n');
        reports.push(MethodReport { method, domain, metrics });
    }
    write_json(&dir.join(format!("{stem}.json")), &reports)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    Ok(reports)
}

fn roar_data(att: &Attributor, method: Method, set: &EvalSet, clips: &[AudioClip]) -> Result<RoarData> {
    Ok(RoarData {
        frames: set.frames(),
        magnitudes: set.items.magnitudes.clone(),
        attributions: att.attributions(method, set, Domain::Stft)?,
        labels: clips.iter().map(|c| c.label.unwrap_or(0)).collect(),
    })
}

pub fn roar_cmd(cfg: &RunConfig, force: bool, decoder_path: Option<&Path>) -> Result<Vec<RoarCurve>> {
    let clf = classifier(cfg)?;
    let methods = &cfg.roar.methods;
    let dec = if methods.contains(&Method::Lmac) {
        Some(decoder(decoder_path.unwrap_or(&cfg.decoder_path()))?)
    } else {
        None
    };
    let dir = cfg.output_dir.join("roar");
    guard(&dir.join("roar.svg"), force)?;
    let data = load_data(cfg)?;
    cfg.persist("roar")?;
    let fe = Frontend::default();
    let per = data.train.len() / lmac_core::synth::NUM_CLASSES;
    let keep = ((per as f64 * cfg.roar.train_fraction).round() as usize).max(1);
    let train_clips = per_class(&data.train.clips, Some(keep));
    let train = EvalSet::prepare(&clf, &fe, &train_clips)?;
    let test = EvalSet::prepare(&clf, &fe, &data.test.clips)?;
    let att = Attributor {
        classifier: &clf,
        decoder: dec.as_ref(),
        frontend: &fe,
        baselines: cfg.eval.baselines,
    };
    let curve_cfg = lmac_core::sanity::RoarConfig {
        train: cfg.classifier.clone(),
        ..cfg.roar.curve.clone()
    };
    let mut curves = Vec::with_capacity(methods.len());
    for &method in methods {
        let curve = roar(
            &fe,
            method.name(),
            &roar_data(&att, method, &train, &train_clips)?,
            &roar_data(&att, method, &test, &data.test.clips)?,
            &ClassifierConfig::default(),
            &curve_cfg,
        )?;
        println!("roar {:<10} {:?}", method.name(), curve.accuracy);
        write_json(&dir.join(format!("{}.json", method.name())), &curve)?;
        curves.push(curve);
    }
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            name: &c.method,
            x: &c.percents,
            y: &c.accuracy,
        })
        .collect();
    fs::write(
        dir.join("roar.svg"),
        line_chart("Remove and retrain", "bins removed (%)", "test accuracy", &series),
    )?;
    Ok(curves)
}

pub fn randomize_cmd(cfg: &RunConfig, force: bool, decoder_path: Option<&Path>) -> Result<lmac_core::sanity::RandomizationTrace> {
    let clf = classifier(cfg)?;
    let dec = decoder(decoder_path.unwrap_or(&cfg.decoder_path()))?;
    let dir = cfg.output_dir.join("randomize");
    guard(&dir.join("trace.json"), force)?;
    let data = load_data(cfg)?;
    cfg.persist("randomize")?;
    let fe = Frontend::default();
    let n = cfg.randomize.items.clamp(1, data.test.len());
    let set = InterpretationSet::prepare(&clf, &fe, &data.test.clips[..n])?;
    let trace = cascading_randomization(&clf, &dec, &fe, &set, cfg.seed)?;
    if trace.ssim_to_original.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("SSIM trace is not finite".into()));
    }
    write_json(&dir.join("trace.json"), &trace)?;
    for (k, snap) in trace.k_blocks.iter().zip(&trace.snapshots) {
        write_mask_png(&dir.join(format!("mask_k{k}.png")), snap, set.bins, set.frames)?;
    }
    let ks: Vec<f64> = trace.k_blocks.iter().map(|&k| k as f64).collect();
    fs::write(
        dir.join("trace.svg"),
        line_chart(
            "Cascading randomisation",
            "layers randomised from the top",
            "SSIM to original",
            &[Series {
                name: "lmac",
                x: &ks,
                y: &trace.ssim_to_original,
            }],
        ),
    )?;
    println!("ssim by k: {:?}", trace.ssim_to_original);
    Ok(trace)
}
