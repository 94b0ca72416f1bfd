//! `prepare`: parse the log, apply the leakage-free chronological split,
//! fit the encoding on the training portion and persist both so training
//! and inference can rebuild identical tensors.

use uncertime_core::eventlog::{make_prefixes, temporal_split, validation_split, Case};

use crate::config::RunConfig;
use crate::manifest::{EncodingManifest, SplitsFile, SPLITS_VERSION};
use crate::rundir::RunDir;
use crate::{commands, manifest, CliError};

pub fn run(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let schema = cfg.schema.to_spec()?;
    let cases = commands::load_cases(cfg)?;
    let split = temporal_split(&cases, cfg.split.test_fraction)
        .map_err(CliError::module("eventlog"))?;
    let (fit, val) = validation_split(&split.train, cfg.split.validation_fraction)
        .map_err(CliError::module("eventlog"))?;

    // Encoding fitted on the full training portion (fit + validation);
    // the test split never contributes statistics.
    let train_log = make_prefixes(&split.train, &schema, None)
        .map_err(CliError::module("eventlog"))?;

    let ids = |cs: &[Case]| cs.iter().map(|c| c.case_id.clone()).collect::<Vec<_>>();
    let splits = SplitsFile {
        version: SPLITS_VERSION,
        train: ids(&fit),
        validation: ids(&val),
        test: ids(&split.test),
        dropped: ids(&split.dropped),
    };
    manifest::save_splits(run.file("splits.json"), &splits)
        .map_err(CliError::module("manifest"))?;
    run.record("splits.json")?;

    let enc = EncodingManifest::new(schema, train_log.encoding.clone());
    manifest::save_encoding(run.file("encoding.json"), &enc)
        .map_err(CliError::module("manifest"))?;
    run.record("encoding.json")?;

    println!(
        "prepare: {} cases -> train {} / validation {} / test {} (dropped {}); {} training prefixes -> {}",
        cases.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        splits.dropped.len(),
        train_log.prefixes.len(),
        run.path.display()
    );
    Ok(())
}
