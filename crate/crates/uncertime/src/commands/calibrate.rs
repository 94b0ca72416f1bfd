//! `calibrate`: fit the initial critical-value table on the tail of the
//! training-split predictions, then recalibrate every `stride` samples
//! along the test stream, scoring coverage on each following window.
//! Emits the plot-ready calibration series and per-prediction intervals.

use std::path::Path;

use uncertime_core::calibrate::{build_intervals, rolling_calibrate, CalPoint, RollingPoint};
use uncertime_core::eval::PredRow;

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{csvio, plot, CliError};

fn cal_points(rows: &[PredRow], what: &str) -> Result<Vec<CalPoint>, CliError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let target = r.target.ok_or_else(|| {
                CliError::Config(format!("{what}: row {i} has no realized target"))
            })?;
            let total_std = r.total_std.ok_or_else(|| {
                CliError::Config(format!(
                    "{what}: row {i} has no total_std (calibration needs uncertainty-aware predictions)"
                ))
            })?;
            Ok(CalPoint {
                target,
                mean: r.mean,
                total_std,
            })
        })
        .collect()
}

pub fn run(
    cfg: &RunConfig,
    run: &mut RunDir,
    train_predictions: &Path,
    test_predictions: &Path,
    svg: bool,
) -> Result<(), CliError> {
    let train_rows =
        csvio::read_predictions(train_predictions).map_err(CliError::module("calibration"))?;
    let test_rows =
        csvio::read_predictions(test_predictions).map_err(CliError::module("calibration"))?;
    let train_points = cal_points(&train_rows, "train predictions")?;
    let test_points = cal_points(&test_rows, "test predictions")?;

    // The stream seen by the roller: the last `window` training samples
    // followed by the test stream, so the first table is fitted purely on
    // training data and every later one on trailing history.
    let window = cfg.calibration.window.min(train_points.len()).max(1);
    let stride = cfg.calibration.stride;
    let tail_start = train_points.len() - window;
    let mut stream = train_points[tail_start..].to_vec();
    stream.extend_from_slice(&test_points);

    let points = rolling_calibrate(&stream, window, stride, &cfg.calibration.levels)
        .map_err(CliError::module("calibration"))?;

    // Report positions in test coordinates: 0 = first test sample.
    let shifted: Vec<RollingPoint> = points
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.table.as_of -= window;
            q
        })
        .collect();
    csvio::write_calibration(run.file("calibration.csv"), &shifted)
        .map_err(CliError::module("calibration"))?;
    run.record("calibration.csv")?;

    // Intervals: each test sample uses the latest table fitted at or
    // before its position.
    let mut intervals = Vec::with_capacity(test_rows.len());
    for (i, p) in shifted.iter().enumerate() {
        let start = p.table.as_of;
        let end = if i + 1 < shifted.len() {
            shifted[i + 1].table.as_of
        } else {
            test_points.len()
        };
        let estimates: Vec<(f64, f64)> = test_points[start..end]
            .iter()
            .map(|c| (c.mean, c.total_std))
            .collect();
        intervals.extend(build_intervals(&estimates, &p.table));
    }
    csvio::write_intervals(
        run.file("intervals.csv"),
        &test_rows[..intervals.len()],
        &intervals,
    )
    .map_err(CliError::module("calibration"))?;
    run.record("intervals.csv")?;

    if svg {
        let z_series: Vec<(String, Vec<(f64, f64)>)> = cfg
            .calibration
            .levels
            .iter()
            .enumerate()
            .map(|(li, &level)| {
                (
                    format!("z* {}%", level * 100.0),
                    shifted
                        .iter()
                        .map(|p| (p.table.as_of as f64, p.table.z[li]))
                        .collect(),
                )
            })
            .collect();
        plot::line_chart(run.file("critical_values.svg"), "critical values", &z_series)?;
        run.record("critical_values.svg")?;
        let cov_series: Vec<(String, Vec<(f64, f64)>)> = cfg
            .calibration
            .levels
            .iter()
            .enumerate()
            .map(|(li, &level)| {
                (
                    format!("coverage {}%", level * 100.0),
                    shifted
                        .iter()
                        .map(|p| (p.table.as_of as f64, p.coverage[li]))
                        .collect(),
                )
            })
            .collect();
        plot::line_chart(run.file("coverage.svg"), "interval coverage", &cov_series)?;
        run.record("coverage.svg")?;
    }

    println!(
        "calibrate: {} tables over {} test samples (window {window}, stride {stride}) -> {}",
        shifted.len(),
        test_points.len(),
        run.path.display()
    );
    Ok(())
}
