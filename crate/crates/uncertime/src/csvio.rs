//! CSV ingestion and all tabular outputs.
//!
//! Event logs come in as UTF-8 CSV with a header row and a configurable
//! delimiter; timestamps parse with the schema's strftime format (UTC is
//! assumed unless the format carries an offset). Floats are written with
//! Rust's shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use uncertime_core::eval::PredRow;
use uncertime_core::eventlog::{Case, Event, SchemaSpec};
use uncertime_core::infer::UncertaintyEstimate;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: line {line}: cannot parse timestamp `{value}` with format `{format}`")]
    BadTimestamp {
        path: String,
        line: u64,
        value: String,
        format: String,
    },
    #[error("{path}: line {line}: cannot parse `{value}` as a number for column `{column}`")]
    BadNumber {
        path: String,
        line: u64,
        value: String,
        column: String,
    },
    #[error("{path}: line {line}: empty activity")]
    EmptyActivity { path: String, line: u64 },
    #[error("{path}: event log has a header but no rows")]
    EmptyLog { path: String },
    #[error("{path}: line {line}: missing field `{column}`")]
    MissingField {
        path: String,
        line: u64,
        column: String,
    },
}

fn parse_timestamp(value: &str, format: &str) -> Option<i64> {
    if format.contains("%z") || format.contains("%:z") || format.contains("%#z") {
        DateTime::parse_from_str(value, format)
            .ok()
            .map(|dt| dt.timestamp())
    } else {
        NaiveDateTime::parse_from_str(value, format)
            .ok()
            .map(|dt| dt.and_utc().timestamp())
    }
}

/// Render an epoch-second timestamp with the schema's format (UTC).
pub fn format_timestamp(ts: i64, format: &str) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|dt| dt.naive_utc().format(format).to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Parse an event-log CSV into cases: events grouped by case id, sorted by
/// timestamp with file order breaking ties; cases keep first-appearance
/// order.
pub fn parse_log(
    path: impl AsRef<Path>,
    schema: &SchemaSpec,
    delimiter: u8,
) -> Result<Vec<Case>, CsvError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| CsvError::Io {
        path: path_str.clone(),
        source,
    };
    let csv_err = |source| CsvError::Csv {
        path: path_str.clone(),
        source,
    };
    let file = std::fs::File::open(path.as_ref()).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_reader(file);

    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| -> Result<usize, CsvError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn {
                path: path_str.clone(),
                column: name.to_string(),
            })
    };
    let case_col = column(&schema.case_id_column)?;
    let activity_col = column(&schema.activity_column)?;
    let ts_col = column(&schema.timestamp_column)?;
    let cat_cols: Vec<usize> = schema
        .categorical
        .iter()
        .map(|c| column(c))
        .collect::<Result<_, _>>()?;
    let num_cols: Vec<usize> = schema
        .numeric
        .iter()
        .map(|c| column(c))
        .collect::<Result<_, _>>()?;

    let mut case_order: Vec<String> = Vec::new();
    let mut by_case: HashMap<String, Vec<(usize, Event)>> = HashMap::new();
    let mut row_index = 0usize;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(row_index as u64 + 2);
        let field = |idx: usize| -> Result<&str, CsvError> {
            record.get(idx).ok_or_else(|| CsvError::MissingField {
                path: path_str.clone(),
                line,
                column: headers.get(idx).unwrap_or("?").to_string(),
            })
        };
        let case_id = field(case_col)?.to_string();
        let activity = field(activity_col)?.to_string();
        if activity.is_empty() {
            return Err(CsvError::EmptyActivity {
                path: path_str.clone(),
                line,
            });
        }
        let ts_raw = field(ts_col)?;
        let timestamp = parse_timestamp(ts_raw, &schema.timestamp_format).ok_or_else(|| {
            CsvError::BadTimestamp {
                path: path_str.clone(),
                line,
                value: ts_raw.to_string(),
                format: schema.timestamp_format.clone(),
            }
        })?;
        let mut extra_categorical = Vec::with_capacity(cat_cols.len());
        for &c in &cat_cols {
            extra_categorical.push(field(c)?.to_string());
        }
        let mut extra_numeric = Vec::with_capacity(num_cols.len());
        for &c in &num_cols {
            let raw = field(c)?;
            let value = raw.trim().parse::<f64>().map_err(|_| CsvError::BadNumber {
                path: path_str.clone(),
                line,
                value: raw.to_string(),
                column: headers.get(c).unwrap_or("?").to_string(),
            })?;
            extra_numeric.push(value);
        }
        if !by_case.contains_key(&case_id) {
            case_order.push(case_id.clone());
        }
        by_case.entry(case_id.clone()).or_default().push((
            row_index,
            Event {
                case_id,
                activity,
                timestamp,
                extra_categorical,
                extra_numeric,
            },
        ));
        row_index += 1;
    }
    if row_index == 0 {
        return Err(CsvError::EmptyLog { path: path_str });
    }
    let mut cases = Vec::with_capacity(case_order.len());
    for case_id in case_order {
        let mut events = by_case.remove(&case_id).expect("case collected");
        events.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
        cases.push(Case {
            case_id,
            events: events.into_iter().map(|(_, e)| e).collect(),
        });
    }
    Ok(cases)
}

fn create(path: impl AsRef<Path>) -> Result<std::io::BufWriter<std::fs::File>, CsvError> {
    let path_str = path.as_ref().display().to_string();
    std::fs::File::create(path.as_ref())
        .map(std::io::BufWriter::new)
        .map_err(|source| CsvError::Io {
            path: path_str,
            source,
        })
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<(), CsvError> {
    w.flush().map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const PREDICTION_HEADER: &str =
    "case_id,prefix_length,target,mean,epistemic_var,aleatoric_var,total_std";

/// One prediction row per prefix; uncertainty columns are empty for point
/// predictions and baselines.
pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredRow]) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "{PREDICTION_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.case_id,
            r.prefix_length,
            fmt_opt(r.target),
            r.mean,
            fmt_opt(r.epistemic_var),
            fmt_opt(r.aleatoric_var),
            fmt_opt(r.total_std),
        )
        .map_err(io)?;
    }
    finish(w, path.as_ref())
}

fn parse_opt(path: &str, line: u64, column: &str, raw: &str) -> Result<Option<f64>, CsvError> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| CsvError::BadNumber {
            path: path.to_string(),
            line,
            value: raw.to_string(),
            column: column.to_string(),
        })
}

/// Read a prediction CSV back (inverse of [`write_predictions`]).
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredRow>, CsvError> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|source| CsvError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| CsvError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let prefix_length =
            get(1)
                .parse::<usize>()
                .map_err(|_| CsvError::BadNumber {
                    path: path_str.clone(),
                    line,
                    value: get(1).to_string(),
                    column: "prefix_length".to_string(),
                })?;
        let mean = get(3).parse::<f64>().map_err(|_| CsvError::BadNumber {
            path: path_str.clone(),
            line,
            value: get(3).to_string(),
            column: "mean".to_string(),
        })?;
        rows.push(PredRow {
            case_id: get(0).to_string(),
            prefix_length,
            target: parse_opt(&path_str, line, "target", get(2))?,
            mean,
            epistemic_var: parse_opt(&path_str, line, "epistemic_var", get(4))?,
            aleatoric_var: parse_opt(&path_str, line, "aleatoric_var", get(5))?,
            total_std: parse_opt(&path_str, line, "total_std", get(6))?,
        });
    }
    Ok(rows)
}

/// Turn model estimates into prediction rows.
pub fn estimate_rows(
    records: &[uncertime_core::eventlog::PrefixRecord],
    estimates: &[UncertaintyEstimate],
) -> Vec<PredRow> {
    records
        .iter()
        .zip(estimates)
        .map(|(r, e)| PredRow {
            case_id: r.case_id.clone(),
            prefix_length: r.prefix_length,
            target: Some(r.target_days),
            mean: e.mean,
            epistemic_var: Some(e.epistemic_var),
            aleatoric_var: Some(e.aleatoric_var),
            total_std: Some(e.total_std),
        })
        .collect()
}

/// Raw Monte-Carlo draws for audit: one row per (prefix, pass).
pub fn write_draws(
    path: impl AsRef<Path>,
    records: &[uncertime_core::eventlog::PrefixRecord],
    draws: &uncertime_core::infer::McDraws,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "case_id,prefix_length,pass,mean,aleatoric_var").map_err(io)?;
    for (t, (means, ales)) in draws.means.iter().zip(&draws.aleatoric_vars).enumerate() {
        for (r, (m, a)) in records.iter().zip(means.iter().zip(ales)) {
            writeln!(w, "{},{},{},{},{}", r.case_id, r.prefix_length, t, m, a).map_err(io)?;
        }
    }
    finish(w, path.as_ref())
}

/// Training log: one row per epoch and split, loss columns on train rows.
pub fn write_training_log(
    path: impl AsRef<Path>,
    epochs: &[uncertime_core::train::EpochRecord],
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(
        w,
        "epoch,split,data_term,weight_reg_term,dropout_entropy_term,total,mae,seconds"
    )
    .map_err(io)?;
    for e in epochs {
        writeln!(
            w,
            "{},train,{},{},{},{},{},{}",
            e.epoch,
            e.loss.data_term,
            e.loss.weight_reg_term,
            e.loss.dropout_entropy_term,
            e.loss.total,
            e.train_mae,
            e.seconds
        )
        .map_err(io)?;
        writeln!(w, "{},val,,,,,{},", e.epoch, e.val_mae).map_err(io)?;
    }
    finish(w, path.as_ref())
}

/// Calibration series: per as-of position and level, the critical value
/// and realized coverage on the following window.
pub fn write_calibration(
    path: impl AsRef<Path>,
    points: &[uncertime_core::calibrate::RollingPoint],
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "as_of,level,z,coverage").map_err(io)?;
    for p in points {
        for (i, &level) in p.table.levels.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                p.table.as_of, level, p.table.z[i], p.coverage[i]
            )
            .map_err(io)?;
        }
    }
    finish(w, path.as_ref())
}

/// Interval predictions, one row per (prediction, level).
pub fn write_intervals(
    path: impl AsRef<Path>,
    rows: &[PredRow],
    intervals: &[uncertime_core::calibrate::IntervalPrediction],
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(
        w,
        "case_id,prefix_length,target,mean,level,lower,upper,clamped"
    )
    .map_err(io)?;
    for (r, ip) in rows.iter().zip(intervals) {
        for b in &ip.bounds {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.case_id,
                r.prefix_length,
                fmt_opt(r.target),
                ip.mean,
                b.level,
                b.lower,
                b.upper,
                ip.clamped
            )
            .map_err(io)?;
        }
    }
    finish(w, path.as_ref())
}

pub fn write_retention(
    path: impl AsRef<Path>,
    curve: &uncertime_core::eval::RetentionCurve,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "share,count,mae").map_err(io)?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.share, p.count, p.mae).map_err(io)?;
    }
    finish(w, path.as_ref())
}

pub fn write_heatmap(
    path: impl AsRef<Path>,
    hm: &uncertime_core::eval::UncertaintyHeatmap,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(
        w,
        "prefix_length,remaining_days_bin,count,mean_total_var,mean_total_std"
    )
    .map_err(io)?;
    for c in &hm.cells {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.prefix_bin + 1,
            hm.spec.day_label(c.day_bin),
            c.count,
            c.mean_total_var,
            c.mean_total_std
        )
        .map_err(io)?;
    }
    finish(w, path.as_ref())
}

pub fn write_comparison(
    path: impl AsRef<Path>,
    rows: &[uncertime_core::eval::ComparisonRow],
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "variant,mae,normalized").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.name, r.mae, fmt_opt(r.normalized)).map_err(io)?;
    }
    finish(w, path.as_ref())
}

/// Write a generated event log in the same schema `parse_log` consumes.
pub fn write_eventlog(
    path: impl AsRef<Path>,
    cases: &[Case],
    schema: &SchemaSpec,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    let mut header = vec![
        schema.case_id_column.clone(),
        schema.activity_column.clone(),
        schema.timestamp_column.clone(),
    ];
    header.extend(schema.categorical.iter().cloned());
    header.extend(schema.numeric.iter().cloned());
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for case in cases {
        for e in &case.events {
            let mut fields = vec![
                e.case_id.clone(),
                e.activity.clone(),
                format_timestamp(e.timestamp, &schema.timestamp_format),
            ];
            fields.extend(e.extra_categorical.iter().cloned());
            fields.extend(e.extra_numeric.iter().map(|v| v.to_string()));
            writeln!(w, "{}", fields.join(",")).map_err(io)?;
        }
    }
    finish(w, path.as_ref())
}

/// Ground-truth expected remaining time per event of a generated log.
pub fn write_truth(
    path: impl AsRef<Path>,
    log: &uncertime_core::synth::SynthEventLog,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "case_id,event_index,expected_remaining_days").map_err(io)?;
    for (case, truth) in log.cases.iter().zip(&log.expected_remaining) {
        for (i, t) in truth.iter().enumerate() {
            writeln!(w, "{},{},{}", case.case_id, i + 1, t).map_err(io)?;
        }
    }
    finish(w, path.as_ref())
}

/// 1-D regression samples with their generating sigma.
pub fn write_regression(
    path: impl AsRef<Path>,
    data: &uncertime_core::synth::Regression1d,
) -> Result<(), CsvError> {
    let mut w = create(&path)?;
    let io = |source| CsvError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    writeln!(w, "x,y,true_sigma").map_err(io)?;
    for i in 0..data.x.len() {
        writeln!(w, "{},{},{}", data.x[i], data.y[i], data.sigma[i]).map_err(io)?;
    }
    finish(w, path.as_ref())
}
