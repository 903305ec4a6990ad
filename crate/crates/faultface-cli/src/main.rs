//! faultface: vibration faceportrait pipeline driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 numeric failure. Set FAULTFACE_WORKERS to cap the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use faultface::dataset::BehaviorClass;
use faultface_cli::config::ExperimentConfig;
use faultface_cli::pipeline::{self, CliError, CliResult};
use faultface_cli::synth::{self, SynthSpec};

#[derive(Parser)]
#[command(
    name = "faultface",
    about = "Vibration faceportrait pipeline: ingest, portraits, per-class GAN balancing, CNN fault detection, SSIM and confusion-matrix reports",
    after_help = "Configuration is a flat key=value file with [sections]; \
see configs/desk.cfg and configs/paper.cfg. Defaults: seed 0, stride 784, \
validation_windows_per_record 1, portrait kind cwt (morse gamma 3 beta 20), \
gan flavor dcgan (lr 1e-4, 40000 iterations, batch 100, d_steps 1, noise 100, \
channels 128,64,32 / 32,64,128), target_per_class 1000, classifier 100 epochs \
at lr 1e-3 with 300/700 per-class train/val split and 16,32,64 channels. \
Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled six-family synthetic dataset (signals + manifest)
    Synth {
        /// Output directory for signal files and manifest.csv
        #[arg(long)]
        out: PathBuf,
        /// Generation seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Samples per record (784 per window)
        #[arg(long, default_value_t = 3920)]
        samples: usize,
        /// Noise standard deviation relative to unit tone amplitude
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Validate the manifest and report class balance
    Ingest(WithConfig),
    /// Render training and original-replica portraits
    Portrait(WithConfig),
    /// Train the per-class adversarial models
    TrainGan {
        #[command(flatten)]
        common: WithConfig,
        /// Train a single class instead of all six
        #[arg(long)]
        class: Option<String>,
    },
    /// Sample portraits from one trained class model
    Generate {
        #[command(flatten)]
        common: WithConfig,
        #[arg(long)]
        class: String,
        #[arg(long, short = 'n', default_value_t = 16)]
        count: usize,
    },
    /// Generate the full balanced dataset from all class models
    Balance(WithConfig),
    /// All-pairs SSIM statistics of original vs generated portraits
    SsimReport(WithConfig),
    /// Train the CNN classifier on the balanced dataset
    TrainCnn(WithConfig),
    /// Evaluate the CNN on the validation split and the original replica
    Evaluate(WithConfig),
    /// Run every stage in order and write the summary
    RunAll(WithConfig),
}

#[derive(clap::Args)]
struct WithConfig {
    /// Experiment configuration file
    #[arg(long, short = 'c')]
    config: PathBuf,
}

fn parse_class(s: &str) -> CliResult<BehaviorClass> {
    BehaviorClass::parse(s).ok_or_else(|| {
        CliError::Config(format!(
            "unknown class {:?}; expected one of {:?}",
            s,
            BehaviorClass::ALL.map(|c| c.name())
        ))
    })
}

fn load_config(path: &PathBuf) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig::load(path)?)
}

fn init_workers() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("FAULTFACE_WORKERS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("FAULTFACE_WORKERS={:?} ignored (want a positive integer)", v),
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            samples,
            noise,
        } => {
            let spec = SynthSpec {
                seed,
                samples_per_record: samples,
                noise,
                ..SynthSpec::default()
            };
            let manifest = synth::generate(&out, &spec)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Ingest(c) => pipeline::stage_ingest(&load_config(&c.config)?),
        Command::Portrait(c) => pipeline::stage_portraits(&load_config(&c.config)?),
        Command::TrainGan { common, class } => {
            let cfg = load_config(&common.config)?;
            let only = class.as_deref().map(parse_class).transpose()?;
            pipeline::stage_train_gans(&cfg, only)
        }
        Command::Generate {
            common,
            class,
            count,
        } => {
            let cfg = load_config(&common.config)?;
            pipeline::stage_generate(&cfg, parse_class(&class)?, count)
        }
        Command::Balance(c) => pipeline::stage_balance(&load_config(&c.config)?),
        Command::SsimReport(c) => pipeline::stage_ssim(&load_config(&c.config)?),
        Command::TrainCnn(c) => pipeline::stage_train_cnn(&load_config(&c.config)?),
        Command::Evaluate(c) => {
            pipeline::stage_evaluate(&load_config(&c.config)?)?;
            Ok(())
        }
        Command::RunAll(c) => {
            let cfg = load_config(&c.config)?;
            let outcome = pipeline::run_experiment(&cfg)?;
            println!("summary: {}", outcome.summary_path.display());
            println!("validation_accuracy: {:.6}", outcome.validation_accuracy);
            println!("original_accuracy: {:.6}", outcome.original_accuracy);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("faultface: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
