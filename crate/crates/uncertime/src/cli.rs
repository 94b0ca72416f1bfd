//! Command-line surface: `synth`, `prepare`, `train`, `predict`,
//! `calibrate`, `evaluate`, `baseline`.
//!
//! Exit codes: 0 success, 1 config/validation/runtime errors, 2 usage
//! errors (unknown command or flags; emitted by the parser itself).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, evaluate::NamedPredictions, predict::PredictArgs, SplitName};
use crate::config::{Overrides, RunConfig};
use crate::rundir::RunDir;
use crate::{csvio, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "uncertime",
    version,
    about = "Uncertainty-aware remaining-time prediction for business-process event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file; omitted sections fall back to defaults.
    #[arg(long, global = false)]
    pub config: Option<PathBuf>,
    /// Root RNG seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory for run directories (overrides paths.out_dir).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Explicit run-directory name instead of timestamp + config hash.
    #[arg(long)]
    pub run_dir: Option<String>,
    /// Event-log CSV (overrides paths.log).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log or regression sample with ground truth
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Parse a log, split it chronologically and fit the feature encoding
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on the prepared splits
    Train {
        #[command(flatten)]
        common: Common,
        /// encoding.json from `prepare`
        #[arg(long)]
        encoding: PathBuf,
        /// splits.json from `prepare`
        #[arg(long)]
        splits: PathBuf,
        /// Cap on training epochs (overrides training.max_epochs).
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Predict one split with a trained model
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        encoding: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        /// checkpoint.json from `train`
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// Stochastic passes per prediction (overrides inference.mc_samples).
        #[arg(long)]
        mc_samples: Option<usize>,
        /// Worker threads for Monte-Carlo inference.
        #[arg(long)]
        threads: Option<usize>,
        /// Deterministic point predictions (no uncertainty columns).
        #[arg(long)]
        point: bool,
        /// Also write the raw per-pass draws for audit.
        #[arg(long)]
        keep_draws: bool,
    },
    /// Rolling empirical calibration of confidence intervals
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Prediction CSV of the training split (initial fitting window).
        #[arg(long)]
        train_predictions: PathBuf,
        /// Prediction CSV of the temporally ordered test split.
        #[arg(long)]
        test_predictions: PathBuf,
        /// Also render SVG charts.
        #[arg(long)]
        svg: bool,
    },
    /// Retention curves, heatmaps and cross-variant comparison
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Prediction source as NAME=PATH[,PATH...]; repeatable. Several
        /// paths per variant are treated as repeated runs and averaged.
        #[arg(long = "predictions", value_name = "NAME=PATH[,PATH...]", required = true)]
        predictions: Vec<String>,
        /// Normalize the comparison so this variant reads 1.0.
        #[arg(long)]
        normalize_to: Option<String>,
        /// Also render SVG charts.
        #[arg(long)]
        svg: bool,
    },
    /// Transition-system baseline predictions
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Prepare { common }
            | Command::Train { common, .. }
            | Command::Predict { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Baseline { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Prepare { .. } => "prepare",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Calibrate { .. } => "calibrate",
            Command::Evaluate { .. } => "evaluate",
            Command::Baseline { .. } => "baseline",
        }
    }
}

/// Execute a parsed invocation; returns the run directory it wrote.
pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let common = cli.command.common().clone();
    let mut overrides = Overrides {
        seed: common.seed,
        out_dir: common.out_dir.clone(),
        log: common.log.clone(),
        ..Overrides::default()
    };
    if let Command::Predict {
        mc_samples,
        threads,
        ..
    } = &cli.command
    {
        overrides.mc_samples = *mc_samples;
        overrides.threads = *threads;
    }
    if let Command::Train { max_epochs, .. } = &cli.command {
        overrides.max_epochs = *max_epochs;
    }
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;

    let mut run_dir = RunDir::create(
        &cfg.out_dir(),
        cli.command.name(),
        &cfg.canonical(),
        cfg.seed,
        common.run_dir.as_deref(),
    )?;

    match &cli.command {
        Command::Synth { .. } => commands::synth::run(&cfg, &mut run_dir)?,
        Command::Prepare { .. } => commands::prepare::run(&cfg, &mut run_dir)?,
        Command::Train {
            encoding, splits, ..
        } => {
            commands::train::run(&cfg, &mut run_dir, encoding, splits)?;
        }
        Command::Predict {
            encoding,
            splits,
            checkpoint,
            split,
            point,
            keep_draws,
            ..
        } => {
            commands::predict::run(
                &cfg,
                &mut run_dir,
                &PredictArgs {
                    encoding,
                    splits,
                    checkpoint,
                    split: *split,
                    point: *point,
                    keep_draws: *keep_draws,
                },
            )?;
        }
        Command::Calibrate {
            train_predictions,
            test_predictions,
            svg,
            ..
        } => {
            commands::calibrate::run(&cfg, &mut run_dir, train_predictions, test_predictions, *svg)?;
        }
        Command::Evaluate {
            predictions,
            normalize_to,
            svg,
            ..
        } => {
            let mut variants = Vec::with_capacity(predictions.len());
            for spec in predictions {
                let (name, paths) = commands::evaluate::parse_named(spec)?;
                let mut runs = Vec::with_capacity(paths.len());
                for path in &paths {
                    runs.push(
                        csvio::read_predictions(path).map_err(CliError::module("evaluation"))?,
                    );
                }
                variants.push(NamedPredictions { name, runs });
            }
            commands::evaluate::run(
                &cfg,
                &mut run_dir,
                &variants,
                normalize_to.as_deref(),
                *svg,
            )?;
        }
        Command::Baseline { splits, split, .. } => {
            commands::baseline::run(&cfg, &mut run_dir, splits, *split)?;
        }
    }
    run_dir.finish()
}
