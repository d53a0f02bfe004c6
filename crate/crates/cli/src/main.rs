mod commands;
mod config;
mod inspect;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use skepxel::codec::{ExportMode, ImageKind};
use skepxel::recognizer::ClassifierSpec;

use config::{PipelineConfig, ThresholdValue};

#[derive(Debug, Parser)]
#[command(name = "skepxel", version, about = "Encode skeleton sequences as images and classify them")]
struct Cli {
    /// TOML (or .json) pipeline configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = all CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an arrangement set.
    Arrange {
        #[command(flatten)]
        arr: ArrangeFlags,
        /// Output JSON file.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Encode every sequence of a manifest into skeletal images.
    Encode {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        arrangement: Option<PathBuf>,
        /// Output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecFlags,
    },
    /// Extract baseline features from encoded images.
    Features {
        /// Directory written by `encode`.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dim: Option<usize>,
        #[arg(long)]
        extractor_seed: Option<u64>,
    },
    /// Fourier Temporal Pyramid descriptors from feature series.
    Ftp {
        /// Directory written by `features` (or any directory with the same summary.json).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        z: Option<usize>,
    },
    /// Train a classifier on the train split of a descriptor file.
    Train {
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        classifier: ClassifierFlags,
    },
    /// Evaluate a model on the test split of a descriptor file.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic action dataset.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 12)]
        per_class: usize,
        #[arg(long, default_value_t = 90)]
        frames: usize,
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Every class uses the same motion (negative control).
        #[arg(long)]
        identical_classes: bool,
    },
    /// Print the header or metadata of any artifact.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
struct ArrangeFlags {
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Number or "auto".
    #[arg(long)]
    gamma_t: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_attempts: Option<u64>,
}

#[derive(Debug, Args)]
struct CodecFlags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// location | velocity | location+velocity
    #[arg(long)]
    kind: Option<ImageKind>,
    /// raw-f32 | png8
    #[arg(long)]
    export: Option<ExportMode>,
    /// Add Gaussian-jittered copies of training videos.
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    copies: Option<usize>,
}

#[derive(Debug, Args)]
struct ClassifierFlags {
    /// knn | ridge
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .with_context(|| format!("missing --{name} (or paths.{name} in the config)"))
}

fn apply_classifier(cfg: &mut PipelineConfig, flags: ClassifierFlags) -> Result<()> {
    let spec = &mut cfg.recognizer.classifier;
    match flags.classifier.as_deref() {
        None => {}
        Some("knn") => *spec = ClassifierSpec::Knn { k: 1 },
        Some("ridge") => *spec = ClassifierSpec::Ridge { lambda: 1.0 },
        Some(other) => anyhow::bail!("unknown classifier {other:?} (knn or ridge)"),
    }
    match spec {
        ClassifierSpec::Knn { k } => set(k, flags.k),
        ClassifierSpec::Ridge { lambda } => set(lambda, flags.lambda),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.workers, cli.workers);
    match cli.command {
        Command::Arrange { arr, out } => {
            let a = &mut cfg.arrangement;
            set(&mut a.h, arr.h);
            set(&mut a.w, arr.w);
            set(&mut a.m, arr.m);
            set(&mut a.gamma_t, arr.gamma_t.map(ThresholdValue::Text));
            set(&mut a.seed, arr.seed);
            set(&mut a.max_attempts, arr.max_attempts);
            if (arr.h.is_some() || arr.w.is_some()) && cfg.layout.hip.is_none() {
                // a grid given on the command line implies the joint count
                cfg.layout.joints = (cfg.arrangement.h * cfg.arrangement.w).saturating_sub(cfg.codec.pad_recipe.len());
            }
            cfg.validate()?;
            let out = required(out, &cfg.paths.arrangement, "arrangement")?;
            commands::arrange(&cfg, &out)?;
            Ok(true)
        }
        Command::Encode {
            manifest,
            arrangement,
            out,
            codec,
        } => {
            let c = &mut cfg.codec;
            set(&mut c.n, codec.n);
            set(&mut c.stride, codec.stride.map(Some));
            set(&mut c.kind, codec.kind);
            set(&mut c.export, codec.export);
            let a = &mut cfg.augment;
            a.enabled |= codec.augment;
            set(&mut a.sigma, codec.sigma);
            set(&mut a.copies, codec.copies);
            cfg.validate()?;
            let manifest = required(manifest, &cfg.paths.manifest, "manifest")?;
            let arrangement = required(arrangement, &cfg.paths.arrangement, "arrangement")?;
            let out = required(out, &cfg.paths.images, "images")?;
            commands::encode(&cfg, &manifest, &arrangement, &out)
        }
        Command::Features {
            images,
            out,
            out_dim,
            extractor_seed,
        } => {
            let e = &mut cfg.recognizer.extractor;
            set(&mut e.out_dim, out_dim);
            set(&mut e.seed, extractor_seed);
            cfg.validate()?;
            let images = required(images, &cfg.paths.images, "images")?;
            let out = required(out, &cfg.paths.features, "features")?;
            commands::features(&cfg, &images, &out)
        }
        Command::Ftp { features, out, levels, z } => {
            set(&mut cfg.ftp.levels, levels);
            set(&mut cfg.ftp.z, z);
            cfg.validate()?;
            let features = required(features, &cfg.paths.features, "features")?;
            let out = required(out, &cfg.paths.descriptors, "descriptors")?;
            commands::ftp(&cfg, &features, &out)?;
            Ok(true)
        }
        Command::Train {
            descriptors,
            out,
            classifier,
        } => {
            apply_classifier(&mut cfg, classifier)?;
            cfg.validate()?;
            let descriptors = required(descriptors, &cfg.paths.descriptors, "descriptors")?;
            let out = required(out, &cfg.paths.model, "model")?;
            commands::train(&cfg, &descriptors, &out)?;
            Ok(true)
        }
        Command::Eval { model, descriptors, out } => {
            cfg.validate()?;
            let model = required(model, &cfg.paths.model, "model")?;
            let descriptors = required(descriptors, &cfg.paths.descriptors, "descriptors")?;
            let out = required(out, &cfg.paths.report, "report")?;
            commands::eval(&cfg, &model, &descriptors, &out)?;
            Ok(true)
        }
        Command::Synth {
            out,
            classes,
            per_class,
            frames,
            joints,
            seed,
            identical_classes,
        } => {
            cfg.validate()?;
            let synth = skepxel::recognizer::SynthConfig {
                classes,
                per_class,
                frames,
                joints: joints.unwrap_or(cfg.layout.joints),
                seed,
                identical_classes,
                ..Default::default()
            };
            commands::synth(&cfg, &synth, &out)?;
            Ok(true)
        }
        Command::Inspect { path } => {
            print!("{}", inspect::describe(&path)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
