use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmac_cli::commands;
use lmac_cli::config::parse_methods;
use lmac_cli::{CliError, Result, RunConfig};
use lmac_core::metrics::Domain;
use lmac_core::synth::Contamination;

#[derive(Parser)]
#[command(name = "lmac", version, about = "Listenable maps for audio classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config to start from (flags given here override it).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Dataset directory (default: <output>/data).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContaminationArg {
    None,
    White,
    Mixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Stft,
    Mel,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        contamination: Option<ContaminationArg>,
        /// Signal-to-noise ratio of white-noise contamination, in dB.
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        train_per_class: Option<usize>,
        #[arg(long)]
        valid_per_class: Option<usize>,
        #[arg(long)]
        test_per_class: Option<usize>,
    },
    /// Train the classifier on the dataset.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// First-stage decoder training.
    TrainInterpreter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        /// Training clips per class to use.
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Guided fine-tuning of a first-stage decoder.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_g: Option<f64>,
        #[arg(long)]
        cct: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        /// First-stage decoder (default: <output>/decoder.lmt1).
        #[arg(long)]
        decoder: Option<PathBuf>,
    },
    /// Write the listenable interpretation of one WAV file.
    Interpret {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        decoder: Option<PathBuf>,
        /// Binarise the mask at this level.
        #[arg(long)]
        hard_threshold: Option<f32>,
    },
    /// Faithfulness metrics of attribution methods on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: lmac,saliency,smoothgrad,ig,gradcam,random,all_ones.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long, value_enum)]
        domain: Option<DomainArg>,
        #[arg(long)]
        decoder: Option<PathBuf>,
        #[arg(long)]
        hard_threshold: Option<f32>,
        /// Evaluate on 0 dB mixtures of test clips.
        #[arg(long)]
        ood: bool,
    },
    /// Remove-and-retrain curves.
    Roar {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        decoder: Option<PathBuf>,
    },
    /// Cascading classifier randomisation, scored by SSIM.
    Randomize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        decoder: Option<PathBuf>,
        /// Test clips to compare.
        #[arg(long)]
        items: Option<usize>,
    },
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.output {
        cfg.output_dir = out.clone();
    }
    if let Some(data) = &common.data {
        cfg.data_dir = Some(data.clone());
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            contamination,
            snr,
            train_per_class,
            valid_per_class,
            test_per_class,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(c) = contamination {
                cfg.data.contamination = match c {
                    ContaminationArg::None => Contamination::None,
                    ContaminationArg::White => Contamination::WhiteNoise,
                    ContaminationArg::Mixture => Contamination::ClassMixture,
                };
            }
            set(&mut cfg.data.snr_db, snr);
            set(&mut cfg.data.train_per_class, train_per_class);
            set(&mut cfg.data.valid_per_class, valid_per_class);
            set(&mut cfg.data.test_per_class, test_per_class);
            commands::synth(&cfg, common.force)
        }
        Command::TrainClassifier { common, epochs } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.classifier.epochs, epochs);
            commands::train_classifier_cmd(&cfg, common.force)
        }
        Command::TrainInterpreter {
            common,
            epochs,
            per_class,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.interpreter.epochs, epochs);
            if per_class.is_some() {
                cfg.interpreter_per_class = per_class;
            }
            commands::train_interpreter_cmd(&cfg, common.force)
        }
        Command::Finetune {
            common,
            lambda_g,
            cct,
            epochs,
            per_class,
            decoder,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.finetune.lambda_g, lambda_g);
            set(&mut cfg.finetune.cct, cct);
            set(&mut cfg.finetune.epochs, epochs);
            if per_class.is_some() {
                cfg.interpreter_per_class = per_class;
            }
            commands::finetune_cmd(&cfg, common.force, decoder.as_deref())
        }
        Command::Interpret {
            common,
            input,
            decoder,
            hard_threshold,
        } => {
            let mut cfg = base_config(&common)?;
            if hard_threshold.is_some() {
                cfg.eval.options.hard_threshold = hard_threshold;
            }
            let th = cfg.eval.options.hard_threshold;
            commands::interpret_cmd(&cfg, common.force, &input, decoder.as_deref(), th).map(|_| ())
        }
        Command::Evaluate {
            common,
            methods,
            domain,
            decoder,
            hard_threshold,
            ood,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(m) = methods {
                cfg.eval.methods = parse_methods(&m)?;
            }
            if let Some(d) = domain {
                cfg.eval.domain = match d {
                    DomainArg::Stft => Domain::Stft,
                    DomainArg::Mel => Domain::Mel,
                };
            }
            if hard_threshold.is_some() {
                cfg.eval.options.hard_threshold = hard_threshold;
            }
            cfg.eval.ood |= ood;
            commands::evaluate_cmd(&cfg, common.force, decoder.as_deref()).map(|_| ())
        }
        Command::Roar {
            common,
            methods,
            decoder,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(m) = methods {
                cfg.roar.methods = parse_methods(&m)?;
            }
            commands::roar_cmd(&cfg, common.force, decoder.as_deref()).map(|_| ())
        }
        Command::Randomize { common, decoder, items } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.randomize.items, items);
            commands::randomize_cmd(&cfg, common.force, decoder.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
