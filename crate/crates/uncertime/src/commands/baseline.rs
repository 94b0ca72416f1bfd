//! `baseline`: annotated-transition-system predictions over one split,
//! written in the shared prediction CSV schema (uncertainty columns empty).

use std::path::Path;

use uncertime_core::ats::build_ats;
use uncertime_core::eval::PredRow;
use uncertime_core::eventlog::SECONDS_PER_DAY;

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{commands, csvio, CliError};

pub fn run(
    cfg: &RunConfig,
    run: &mut RunDir,
    splits_path: &Path,
    split: commands::SplitName,
) -> Result<(), CliError> {
    let split_cases = commands::load_split_cases(cfg, splits_path)?;
    let ats = build_ats(&split_cases.full_train(), cfg.baseline.abstraction()?)
        .map_err(CliError::module("baseline"))?;
    let stat = cfg.baseline.statistic()?;

    let mut rows = Vec::new();
    for case in split_cases.get(split) {
        let acts: Vec<&str> = case.events.iter().map(|e| e.activity.as_str()).collect();
        let end = case.end();
        for k in 1..=case.events.len() {
            rows.push(PredRow {
                case_id: case.case_id.clone(),
                prefix_length: k,
                target: Some(
                    (end - case.events[k - 1].timestamp) as f64 / SECONDS_PER_DAY,
                ),
                mean: ats.predict(&acts[..k], stat),
                epistemic_var: None,
                aleatoric_var: None,
                total_std: None,
            });
        }
    }

    let name = format!("baseline_{split}.csv");
    csvio::write_predictions(run.file(&name), &rows).map_err(CliError::module("baseline"))?;
    run.record(&name)?;
    println!(
        "baseline: {} states, {} {split} predictions -> {}",
        ats.state_count(),
        rows.len(),
        run.path.display()
    );
    Ok(())
}
