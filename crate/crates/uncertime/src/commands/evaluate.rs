//! `evaluate`: retention curves and uncertainty heatmaps per variant with
//! complete uncertainty columns, plus a cross-variant MAE comparison table.

use uncertime_core::eval::{compare_models, retention_curve, uncertainty_heatmap, PredRow};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{csvio, plot, CliError};

/// `NAME=PATH[,PATH...]` prediction source: one variant, one or more
/// repeated runs (same test set, different seeds) to average over.
pub struct NamedPredictions {
    pub name: String,
    pub runs: Vec<Vec<PredRow>>,
}

pub fn parse_named(spec: &str) -> Result<(String, Vec<std::path::PathBuf>), CliError> {
    match spec.split_once('=') {
        Some((name, paths)) if !name.is_empty() && !paths.is_empty() => Ok((
            name.to_string(),
            paths.split(',').map(Into::into).collect(),
        )),
        _ => Err(CliError::Config(format!(
            "--predictions expects NAME=PATH[,PATH...], got `{spec}`"
        ))),
    }
}

pub fn run(
    cfg: &RunConfig,
    run: &mut RunDir,
    variants: &[NamedPredictions],
    normalize_to: Option<&str>,
    svg: bool,
) -> Result<(), CliError> {
    if variants.is_empty() {
        return Err(CliError::Config(
            "evaluate needs at least one --predictions NAME=PATH".into(),
        ));
    }
    let heat_spec = cfg.evaluation.heatmap_spec();
    for v in variants {
        // Retention curve and heatmap are computed on the first run of
        // each uncertainty-aware variant; the comparison averages all runs.
        let rows = &v.runs[0];
        let has_uncertainty = !rows.is_empty()
            && rows.iter().all(|r| r.total_std.is_some() && r.target.is_some());
        if !has_uncertainty {
            println!(
                "evaluate: `{}` has no uncertainty columns; comparison only",
                v.name
            );
            continue;
        }
        let curve = retention_curve(rows, &cfg.evaluation.shares)
            .map_err(CliError::module("evaluation"))?;
        let name = format!("retention_{}.csv", v.name);
        csvio::write_retention(run.file(&name), &curve)
            .map_err(CliError::module("evaluation"))?;
        run.record(&name)?;

        let hm = uncertainty_heatmap(rows, &heat_spec)
            .map_err(CliError::module("evaluation"))?;
        let name = format!("heatmap_{}.csv", v.name);
        csvio::write_heatmap(run.file(&name), &hm).map_err(CliError::module("evaluation"))?;
        run.record(&name)?;

        if svg {
            let series = vec![(
                v.name.clone(),
                curve
                    .points
                    .iter()
                    .map(|p| (p.share, p.mae))
                    .collect::<Vec<_>>(),
            )];
            let name = format!("retention_{}.svg", v.name);
            plot::line_chart(run.file(&name), "MAE by retained share", &series)?;
            run.record(&name)?;
            let name = format!("heatmap_{}.svg", v.name);
            plot::heatmap_chart(run.file(&name), &hm)?;
            run.record(&name)?;
        }
    }

    // Cross-variant table: MAE per (variant, run) via the same checks,
    // then averaged per variant over its runs.
    let max_runs = variants.iter().map(|v| v.runs.len()).max().unwrap_or(1);
    let mut avg_mae = vec![0.0f64; variants.len()];
    for run_idx in 0..max_runs {
        let named: Vec<(String, Vec<PredRow>)> = variants
            .iter()
            .map(|v| {
                let rows = &v.runs[run_idx.min(v.runs.len() - 1)];
                (v.name.clone(), rows.clone())
            })
            .collect();
        let per_run = compare_models(&named, None).map_err(CliError::module("evaluation"))?;
        for (i, row) in per_run.iter().enumerate() {
            let share = 1.0 / variants[i].runs.len().max(1) as f64;
            if run_idx < variants[i].runs.len() {
                avg_mae[i] += row.mae * share;
            }
        }
    }
    let base = match normalize_to {
        Some(name) => Some(
            variants
                .iter()
                .position(|v| v.name == name)
                .map(|i| avg_mae[i])
                .ok_or_else(|| CliError::Config(format!(
                    "--normalize-to `{name}` is not among the variants"
                )))?,
        ),
        None => None,
    };
    let table: Vec<uncertime_core::eval::ComparisonRow> = variants
        .iter()
        .zip(&avg_mae)
        .map(|(v, &mae)| uncertime_core::eval::ComparisonRow {
            name: v.name.clone(),
            mae,
            normalized: base.map(|b| mae / b),
        })
        .collect();
    csvio::write_comparison(run.file("comparison.csv"), &table)
        .map_err(CliError::module("evaluation"))?;
    run.record("comparison.csv")?;

    for (v, row) in variants.iter().zip(&table) {
        let runs = v.runs.len();
        match row.normalized {
            Some(n) => println!(
                "evaluate: {} MAE {:.4} days over {runs} run(s) (normalized {:.3})",
                row.name, row.mae, n
            ),
            None => println!(
                "evaluate: {} MAE {:.4} days over {runs} run(s)",
                row.name, row.mae
            ),
        }
    }
    Ok(())
}
