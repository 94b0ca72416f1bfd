//! `predict`: deterministic point predictions or Monte-Carlo dropout
//! predictive distributions over one split, written as a prediction CSV.
//!
//! With `--threads N` the batch is partitioned across scoped threads; mask
//! streams derive from the pass index alone, so the output is byte-equal
//! to a single-threaded run.

use std::path::Path;

use uncertime_core::eval::PredRow;
use uncertime_core::eventlog::PrefixRecord;
use uncertime_core::infer::{
    mc_predict, mc_predict_with_draws, predict_point, McConfig, UncertaintyEstimate,
};
use uncertime_core::layers::{DropoutMode, Model};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{checkpoint, commands, csvio, manifest, CliError};

pub struct PredictArgs<'a> {
    pub encoding: &'a Path,
    pub splits: &'a Path,
    pub checkpoint: &'a Path,
    pub split: commands::SplitName,
    pub point: bool,
    /// Persist the raw per-pass draws next to the predictions.
    pub keep_draws: bool,
}

fn mc_parallel(
    model: &Model,
    records: &[PrefixRecord],
    mc: &McConfig,
    threads: usize,
) -> Result<Vec<UncertaintyEstimate>, CliError> {
    if threads <= 1 || records.len() < 2 {
        return mc_predict(model, records, mc).map_err(CliError::module("inference"));
    }
    let chunk = records.len().div_ceil(threads);
    let results: Vec<Result<Vec<UncertaintyEstimate>, _>> = std::thread::scope(|scope| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| scope.spawn(move || mc_predict(model, part, mc)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut merged = Vec::with_capacity(records.len());
    for r in results {
        merged.extend(r.map_err(CliError::module("inference"))?);
    }
    Ok(merged)
}

pub fn run(cfg: &RunConfig, run: &mut RunDir, args: &PredictArgs) -> Result<(), CliError> {
    let enc = manifest::load_encoding(args.encoding).map_err(CliError::module("manifest"))?;
    let split_cases = commands::load_split_cases(cfg, args.splits)?;
    let encoded = commands::encode_with(split_cases.get(args.split), &enc)?;
    let model = checkpoint::load(args.checkpoint).map_err(CliError::module("checkpoint"))?;

    let use_point = args.point || matches!(model.spec.dropout, DropoutMode::None);
    let rows: Vec<PredRow> = if use_point {
        let means =
            predict_point(&model, &encoded.prefixes).map_err(CliError::module("inference"))?;
        encoded
            .prefixes
            .iter()
            .zip(&means)
            .map(|(r, &mean)| PredRow {
                case_id: r.case_id.clone(),
                prefix_length: r.prefix_length,
                target: Some(r.target_days),
                mean,
                epistemic_var: None,
                aleatoric_var: None,
                total_std: None,
            })
            .collect()
    } else {
        let mc = McConfig {
            samples: cfg.inference.mc_samples,
            seed: cfg.seed,
            allow_single: false,
        };
        let estimates = if args.keep_draws {
            // Draw retention runs on one thread; results are identical by
            // construction of the per-pass substreams.
            let (estimates, draws) = mc_predict_with_draws(&model, &encoded.prefixes, &mc)
                .map_err(CliError::module("inference"))?;
            let name = format!("draws_{}.csv", args.split);
            csvio::write_draws(run.file(&name), &encoded.prefixes, &draws)
                .map_err(CliError::module("inference"))?;
            run.record(&name)?;
            estimates
        } else {
            mc_parallel(&model, &encoded.prefixes, &mc, cfg.inference.threads)?
        };
        csvio::estimate_rows(&encoded.prefixes, &estimates)
    };

    let name = format!("predictions_{}.csv", args.split);
    csvio::write_predictions(run.file(&name), &rows).map_err(CliError::module("inference"))?;
    run.record(&name)?;
    println!(
        "predict: {} {} predictions ({}) -> {}",
        rows.len(),
        args.split,
        if use_point {
            "point".to_string()
        } else {
            format!("mc T={}", cfg.inference.mc_samples)
        },
        run.path.display()
    );
    Ok(())
}
