//! `train`: rebuild the encoded splits, train the configured model and
//! write the checkpoint plus the per-epoch training log.

use std::path::Path;
use std::time::Instant;

use uncertime_core::layers::Model;
use uncertime_core::train::{train, TrainReport};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{checkpoint, commands, csvio, manifest, CliError};

pub fn run(
    cfg: &RunConfig,
    run: &mut RunDir,
    encoding_path: &Path,
    splits_path: &Path,
) -> Result<TrainReport, CliError> {
    let enc = manifest::load_encoding(encoding_path).map_err(CliError::module("manifest"))?;
    let split_cases = commands::load_split_cases(cfg, splits_path)?;

    let fit_log = commands::encode_with(&split_cases.train, &enc)?;
    let val_log = commands::encode_with(&split_cases.validation, &enc)?;

    let layout = enc.encoding.layout();
    let spec = cfg.model.to_spec(layout.categorical_vocab_sizes.len())?;
    let mut model =
        Model::init(spec, layout, cfg.seed).map_err(CliError::module("layers"))?;

    let started = Instant::now();
    let clock = move || started.elapsed().as_secs_f64();
    let report = train(
        &mut model,
        &fit_log.prefixes,
        &val_log.prefixes,
        &cfg.training.to_core(cfg.seed),
        &clock,
    )
    .map_err(CliError::module("training"))?;

    checkpoint::save(run.file("checkpoint.json"), &model)
        .map_err(CliError::module("checkpoint"))?;
    run.record("checkpoint.json")?;
    csvio::write_training_log(run.file("training_log.csv"), &report.epochs)
        .map_err(CliError::module("training"))?;
    run.record("training_log.csv")?;

    println!(
        "train: {} epochs, best epoch {} (val MAE {:.4} days) -> {}",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_mae(),
        run.path.display()
    );
    if !report.dropout_probabilities.is_empty() {
        let ps: Vec<String> = report
            .dropout_probabilities
            .iter()
            .map(|(name, p)| format!("{name}={p:.3}"))
            .collect();
        println!("train: dropout probabilities: {}", ps.join(" "));
    }
    Ok(report)
}
