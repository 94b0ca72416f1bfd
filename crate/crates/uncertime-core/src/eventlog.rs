//! Event-log domain types, leakage-free temporal splitting and prefix
//! encoding.
//!
//! Timestamps are UTC epoch seconds; parsing calendar strings into them is
//! the companion crate's job. Remaining-time targets are fractional days.
//!
//! Encoding contract:
//! * every categorical feature gets its own vocabulary with index 0
//!   reserved for padding and index 1 for labels unseen at fit time;
//! * numeric features are standardized with mean/stddev fitted on the
//!   training portion only (features constant on the training data pass
//!   through unscaled);
//! * windows are left-padded with all-zero rows, and windows longer than
//!   `sequence_length` keep the most recent events.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::fmath;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Vocabulary index reserved for left-padding rows.
pub const PAD_INDEX: usize = 0;
/// Vocabulary index for labels never seen while fitting.
pub const UNSEEN_INDEX: usize = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("schema: duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("schema: sequence_length must be >= 1")]
    ZeroSequenceLength,
    #[error("event in case `{case_id}` has an empty activity")]
    EmptyActivity { case_id: String },
    #[error("case `{case_id}` has no events")]
    EmptyCase { case_id: String },
    #[error("event in case `{case_id}` carries {actual} values for feature `{kind}`, schema expects {expected}")]
    FeatureArity {
        case_id: String,
        kind: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("temporal split requires at least 2 cases, got {0}")]
    TooFewCases(usize),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadTestFraction(f64),
    #[error("temporal split left no training cases (fraction {fraction}, {dropped} overlapping cases dropped)")]
    DegenerateSplit { fraction: f64, dropped: usize },
    #[error("categorical index {index} out of range for vocabulary `{feature}` of size {size}")]
    IndexOutOfVocab {
        feature: String,
        index: usize,
        size: usize,
    },
}

/// One event of a case. `extra_categorical` / `extra_numeric` hold values in
/// the order the schema declares the corresponding feature names.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub extra_categorical: Vec<String>,
    pub extra_numeric: Vec<f64>,
}

/// Time-ordered events of one process instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Case {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Case {
    pub fn start(&self) -> i64 {
        self.events.first().map(|e| e.timestamp).unwrap_or(0)
    }

    pub fn end(&self) -> i64 {
        self.events.last().map(|e| e.timestamp).unwrap_or(0)
    }

    /// Enforces ordering and non-emptiness.
    pub fn validate(&self) -> Result<(), LogError> {
        if self.events.is_empty() {
            return Err(LogError::EmptyCase {
                case_id: self.case_id.clone(),
            });
        }
        for e in &self.events {
            if e.activity.is_empty() {
                return Err(LogError::EmptyActivity {
                    case_id: self.case_id.clone(),
                });
            }
        }
        debug_assert!(self
            .events
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
        Ok(())
    }
}

/// Synthetic per-event features derived from timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticToggles {
    pub event_number: bool,
    pub elapsed_since_previous: bool,
    pub elapsed_since_start: bool,
    pub day_of_week: bool,
    pub hour_of_day: bool,
}

impl Default for SyntheticToggles {
    fn default() -> Self {
        SyntheticToggles {
            event_number: true,
            elapsed_since_previous: true,
            elapsed_since_start: true,
            day_of_week: true,
            hour_of_day: true,
        }
    }
}

impl SyntheticToggles {
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.event_number {
            out.push("event_number");
        }
        if self.elapsed_since_previous {
            out.push("elapsed_since_previous");
        }
        if self.elapsed_since_start {
            out.push("elapsed_since_start");
        }
        if self.day_of_week {
            out.push("day_of_week");
        }
        if self.hour_of_day {
            out.push("hour_of_day");
        }
        out
    }
}

/// Column and feature declaration for a log.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SchemaSpec {
    pub case_id_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    /// strftime-style format used by the parser in the companion crate.
    pub timestamp_format: String,
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
    pub sequence_length: usize,
    pub synthetic: SyntheticToggles,
}

impl SchemaSpec {
    pub fn new(sequence_length: usize) -> Self {
        SchemaSpec {
            case_id_column: "case_id".to_string(),
            activity_column: "activity".to_string(),
            timestamp_column: "timestamp".to_string(),
            timestamp_format: "%Y-%m-%d %H:%M:%S".to_string(),
            categorical: Vec::new(),
            numeric: Vec::new(),
            sequence_length,
            synthetic: SyntheticToggles::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if self.sequence_length == 0 {
            return Err(LogError::ZeroSequenceLength);
        }
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for name in self
            .categorical
            .iter()
            .map(String::as_str)
            .chain(self.numeric.iter().map(String::as_str))
            .chain(self.synthetic.names())
        {
            if seen.insert(name, ()).is_some() {
                return Err(LogError::DuplicateFeature(name.to_string()));
            }
        }
        Ok(())
    }

    /// Names of all categorical feature slots, activity first.
    pub fn categorical_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(1 + self.categorical.len());
        names.push("activity".to_string());
        names.extend(self.categorical.iter().cloned());
        names
    }

    /// Names of all numeric feature slots: declared numerics, then the
    /// enabled synthetic features.
    pub fn numeric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numeric.clone();
        names.extend(self.synthetic.names().into_iter().map(String::from));
        names
    }
}

/// String-to-index map for one categorical feature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vocabulary {
    pub feature: String,
    pub index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.index.len() + 2
    }

    pub fn encode(&self, label: &str) -> usize {
        self.index.get(label).copied().unwrap_or(UNSEEN_INDEX)
    }

    /// Recover the label of a regular index (not padding/unseen).
    pub fn decode(&self, index: usize) -> Option<&str> {
        self.index
            .iter()
            .find(|(_, &i)| i == index)
            .map(|(label, _)| label.as_str())
    }
}

/// Standardization parameters of one numeric feature, fitted on training
/// data. `scale == false` marks constant features passed through raw.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NumericStats {
    pub feature: String,
    pub mean: f64,
    pub stddev: f64,
    pub scale: bool,
}

impl NumericStats {
    pub fn apply(&self, x: f64) -> f64 {
        if self.scale {
            (x - self.mean) / self.stddev
        } else {
            x
        }
    }
}

/// Shapes the model needs to consume encoded windows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureLayout {
    pub categorical_vocab_sizes: Vec<usize>,
    pub numeric_count: usize,
    pub sequence_length: usize,
}

/// Fitted vocabularies plus numeric standardization; reusable at inference.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Encoding {
    pub vocabularies: Vec<Vocabulary>,
    pub numeric_stats: Vec<NumericStats>,
    pub sequence_length: usize,
}

impl Encoding {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            categorical_vocab_sizes: self.vocabularies.iter().map(Vocabulary::size).collect(),
            numeric_count: self.numeric_stats.len(),
            sequence_length: self.sequence_length,
        }
    }
}

/// One encoded prefix: a left-padded `sequence_length` window of feature
/// rows plus its remaining-time target in fractional days.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrefixRecord {
    pub case_id: String,
    pub prefix_length: usize,
    /// `[sequence_length * n_categorical]`, row-major.
    pub categorical: Vec<usize>,
    /// `[sequence_length * n_numeric]`, row-major, standardized.
    pub numeric: Vec<f64>,
    /// Remaining time in fractional days (raw units, never standardized).
    pub target_days: f64,
    pub case_start: i64,
    pub event_timestamp: i64,
}

/// Encoding plus the encoded prefixes of one split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncodedLog {
    pub encoding: Encoding,
    pub prefixes: Vec<PrefixRecord>,
}

/// Outcome of the leakage-free chronological split.
#[derive(Debug, Clone)]
pub struct TemporalSplit {
    pub train: Vec<Case>,
    pub test: Vec<Case>,
    /// Cases removed from training because they end after the first test
    /// case starts; they appear in neither split.
    pub dropped: Vec<Case>,
}

/// Rank cases by start time, reserve the last `test_fraction` starters as
/// the test set, and drop every remaining case that is still running when
/// the earliest test case starts. Ties in start time keep input order.
pub fn temporal_split(cases: &[Case], test_fraction: f64) -> Result<TemporalSplit, LogError> {
    if cases.len() < 2 {
        return Err(LogError::TooFewCases(cases.len()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LogError::BadTestFraction(test_fraction));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| cases[a].start().cmp(&cases[b].start()).then(a.cmp(&b)));
    let n_test = fmath::ceil(test_fraction * cases.len() as f64) as usize;
    let n_test = n_test.clamp(1, cases.len() - 1);
    let split_at = cases.len() - n_test;
    let test: Vec<Case> = order[split_at..].iter().map(|&i| cases[i].clone()).collect();
    let horizon = test.iter().map(Case::start).min().expect("non-empty test");
    let mut train = Vec::new();
    let mut dropped = Vec::new();
    for &i in &order[..split_at] {
        if cases[i].end() >= horizon {
            dropped.push(cases[i].clone());
        } else {
            train.push(cases[i].clone());
        }
    }
    if train.is_empty() {
        return Err(LogError::DegenerateSplit {
            fraction: test_fraction,
            dropped: dropped.len(),
        });
    }
    Ok(TemporalSplit {
        train,
        test,
        dropped,
    })
}

/// Chronologically last `fraction` of cases as a validation set, mirroring
/// the test split rule (no overlap deletion within training data).
pub fn validation_split(cases: &[Case], fraction: f64) -> Result<(Vec<Case>, Vec<Case>), LogError> {
    if cases.len() < 2 {
        return Err(LogError::TooFewCases(cases.len()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LogError::BadTestFraction(fraction));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| cases[a].start().cmp(&cases[b].start()).then(a.cmp(&b)));
    let n_val = (fmath::ceil(fraction * cases.len() as f64) as usize).clamp(1, cases.len() - 1);
    let split_at = cases.len() - n_val;
    let fit: Vec<Case> = order[..split_at].iter().map(|&i| cases[i].clone()).collect();
    let val: Vec<Case> = order[split_at..].iter().map(|&i| cases[i].clone()).collect();
    Ok((fit, val))
}

struct RawRow {
    categorical: Vec<String>,
    numeric: Vec<f64>,
}

fn day_of_week(ts: i64) -> f64 {
    // 1970-01-01 was a Thursday; 0 = Monday.
    ((ts.div_euclid(86_400) + 3).rem_euclid(7)) as f64
}

fn hour_of_day(ts: i64) -> f64 {
    (ts.rem_euclid(86_400) / 3_600) as f64
}

fn raw_row(case: &Case, idx: usize, schema: &SchemaSpec) -> Result<RawRow, LogError> {
    let e = &case.events[idx];
    if e.extra_categorical.len() != schema.categorical.len() {
        return Err(LogError::FeatureArity {
            case_id: case.case_id.clone(),
            kind: "categorical",
            expected: schema.categorical.len(),
            actual: e.extra_categorical.len(),
        });
    }
    if e.extra_numeric.len() != schema.numeric.len() {
        return Err(LogError::FeatureArity {
            case_id: case.case_id.clone(),
            kind: "numeric",
            expected: schema.numeric.len(),
            actual: e.extra_numeric.len(),
        });
    }
    let mut categorical = Vec::with_capacity(1 + schema.categorical.len());
    categorical.push(e.activity.clone());
    categorical.extend(e.extra_categorical.iter().cloned());

    let mut numeric = e.extra_numeric.clone();
    let t = &schema.synthetic;
    if t.event_number {
        numeric.push((idx + 1) as f64);
    }
    if t.elapsed_since_previous {
        let prev = if idx == 0 {
            e.timestamp
        } else {
            case.events[idx - 1].timestamp
        };
        numeric.push((e.timestamp - prev) as f64 / SECONDS_PER_DAY);
    }
    if t.elapsed_since_start {
        numeric.push((e.timestamp - case.start()) as f64 / SECONDS_PER_DAY);
    }
    if t.day_of_week {
        numeric.push(day_of_week(e.timestamp));
    }
    if t.hour_of_day {
        numeric.push(hour_of_day(e.timestamp));
    }
    Ok(RawRow {
        categorical,
        numeric,
    })
}

/// Derive every prefix of every case and encode it to fixed-length feature
/// windows with remaining-time targets.
///
/// With `existing == None` vocabularies and standardization are fitted on
/// `cases` (the training portion); pass the fitted [`Encoding`] back in to
/// encode validation/test data without leaking their statistics.
pub fn make_prefixes(
    cases: &[Case],
    schema: &SchemaSpec,
    existing: Option<&Encoding>,
) -> Result<EncodedLog, LogError> {
    schema.validate()?;
    for c in cases {
        c.validate()?;
    }
    let seq = schema.sequence_length;
    let cat_names = schema.categorical_names();
    let num_names = schema.numeric_names();

    let encoding = match existing {
        Some(e) => e.clone(),
        None => {
            // Vocabularies: labels indexed from 2 in order of first appearance.
            let mut vocabs: Vec<Vocabulary> = cat_names
                .iter()
                .map(|name| Vocabulary {
                    feature: name.clone(),
                    index: BTreeMap::new(),
                })
                .collect();
            for case in cases {
                for idx in 0..case.events.len() {
                    let row = raw_row(case, idx, schema)?;
                    for (v, label) in vocabs.iter_mut().zip(&row.categorical) {
                        let next = v.index.len() + 2;
                        v.index.entry(label.clone()).or_insert(next);
                    }
                }
            }
            // Standardization over the multiset of emitted non-padding rows.
            let mut sums = alloc::vec![0.0f64; num_names.len()];
            let mut sqs = alloc::vec![0.0f64; num_names.len()];
            let mut count = 0usize;
            for case in cases {
                for k in 1..=case.events.len() {
                    let lo = k.saturating_sub(seq);
                    for idx in lo..k {
                        let row = raw_row(case, idx, schema)?;
                        for (j, &x) in row.numeric.iter().enumerate() {
                            sums[j] += x;
                            sqs[j] += x * x;
                        }
                        count += 1;
                    }
                }
            }
            let numeric_stats = num_names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let n = count.max(1) as f64;
                    let mean = sums[j] / n;
                    let var = (sqs[j] / n - mean * mean).max(0.0);
                    let stddev = fmath::sqrt(var);
                    NumericStats {
                        feature: name.clone(),
                        mean,
                        stddev: if stddev > 0.0 { stddev } else { 1.0 },
                        scale: stddev > 0.0,
                    }
                })
                .collect();
            Encoding {
                vocabularies: vocabs,
                numeric_stats,
                sequence_length: seq,
            }
        }
    };

    let n_cat = cat_names.len();
    let n_num = num_names.len();
    let mut prefixes = Vec::new();
    for case in cases {
        let end = case.end();
        for k in 1..=case.events.len() {
            let mut categorical = alloc::vec![PAD_INDEX; seq * n_cat];
            let mut numeric = alloc::vec![0.0f64; seq * n_num];
            // Keep the most recent `seq` events, right-aligned.
            let lo = k.saturating_sub(seq);
            let used = k - lo;
            for (slot, idx) in (seq - used..seq).zip(lo..k) {
                let row = raw_row(case, idx, schema)?;
                for (f, label) in row.categorical.iter().enumerate() {
                    categorical[slot * n_cat + f] = encoding.vocabularies[f].encode(label);
                }
                for (f, &x) in row.numeric.iter().enumerate() {
                    numeric[slot * n_num + f] = encoding.numeric_stats[f].apply(x);
                }
            }
            let at = case.events[k - 1].timestamp;
            prefixes.push(PrefixRecord {
                case_id: case.case_id.clone(),
                prefix_length: k,
                categorical,
                numeric,
                target_days: (end - at) as f64 / SECONDS_PER_DAY,
                case_start: case.start(),
                event_timestamp: at,
            });
        }
    }
    Ok(EncodedLog { encoding, prefixes })
}

/// Flat batch view over a set of prefix windows, ready for the layers.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub batch: usize,
    pub sequence_length: usize,
    pub n_categorical: usize,
    pub n_numeric: usize,
    /// `[batch * sequence_length * n_categorical]`.
    pub categorical: Vec<usize>,
    /// `[batch * sequence_length * n_numeric]`.
    pub numeric: Vec<f64>,
}

pub fn batch_windows(records: &[&PrefixRecord], layout: &FeatureLayout) -> WindowBatch {
    let seq = layout.sequence_length;
    let n_cat = layout.categorical_vocab_sizes.len();
    let n_num = layout.numeric_count;
    let mut categorical = Vec::with_capacity(records.len() * seq * n_cat);
    let mut numeric = Vec::with_capacity(records.len() * seq * n_num);
    for r in records {
        categorical.extend_from_slice(&r.categorical);
        numeric.extend_from_slice(&r.numeric);
    }
    WindowBatch {
        batch: records.len(),
        sequence_length: seq,
        n_categorical: n_cat,
        n_numeric: n_num,
        categorical,
        numeric,
    }
}
