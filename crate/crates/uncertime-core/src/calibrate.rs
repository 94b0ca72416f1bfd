//! Empirical confidence-interval calibration.
//!
//! A critical value `z*` per confidence level is the empirical quantile of
//! normalized absolute residuals `|y - mean| / total_std` over a trailing
//! window; intervals are `mean +/- z* total_std` with the lower bound
//! clamped at zero days. Rolling recalibration refits on the preceding
//! window every `stride` samples and scores coverage on the following
//! window.

use alloc::vec::Vec;

use crate::fmath;
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("critical values need a non-empty window")]
    EmptyWindow,
    #[error("critical values need levels strictly inside (0, 1)")]
    BadLevel(f64),
    #[error("calibration point {index} has non-positive total_std")]
    NonPositiveStd { index: usize },
    #[error("window size and stride must be >= 1")]
    ZeroWindowOrStride,
    #[error("stream of {len} samples is shorter than window {window} + stride {stride}")]
    StreamTooShort {
        len: usize,
        window: usize,
        stride: usize,
    },
}

/// One scored prediction: realized target, predictive mean and total
/// predictive standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalPoint {
    pub target: f64,
    pub mean: f64,
    pub total_std: f64,
}

/// Empirical critical values for a set of confidence levels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticalValueTable {
    /// Ascending confidence levels.
    pub levels: Vec<f64>,
    /// `z*` per level; non-decreasing in the level.
    pub z: Vec<f64>,
    pub window: usize,
    /// Stream position the table was fitted at (samples before it).
    pub as_of: usize,
}

impl CriticalValueTable {
    pub fn z_for(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|i| self.z[i])
    }
}

pub const DEFAULT_LEVELS: [f64; 5] = [0.50, 0.75, 0.90, 0.95, 0.99];
pub const DEFAULT_WINDOW: usize = 5_000;
pub const DEFAULT_STRIDE: usize = 1_000;

/// Fit `z*(level)` as the level-quantile (linear interpolation) of the
/// window's normalized absolute residuals.
pub fn fit_critical_values(
    window: &[CalPoint],
    levels: &[f64],
) -> Result<CriticalValueTable, CalibrationError> {
    fit_at(window, levels, window.len())
}

fn fit_at(
    window: &[CalPoint],
    levels: &[f64],
    as_of: usize,
) -> Result<CriticalValueTable, CalibrationError> {
    if window.is_empty() {
        return Err(CalibrationError::EmptyWindow);
    }
    for (i, p) in window.iter().enumerate() {
        if !p.total_std.is_finite() || p.total_std <= 0.0 {
            return Err(CalibrationError::NonPositiveStd { index: i });
        }
    }
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if let Some(&bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(CalibrationError::BadLevel(bad));
    }
    let mut scores: Vec<f64> = window
        .iter()
        .map(|p| fmath::abs(p.target - p.mean) / p.total_std)
        .collect();
    scores.sort_by(f64::total_cmp);
    let z: Vec<f64> = levels
        .iter()
        .map(|&l| stats::quantile_sorted(&scores, l))
        .collect();
    Ok(CriticalValueTable {
        levels,
        z,
        window: window.len(),
        as_of,
    })
}

/// Confidence bounds of one prediction at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelBound {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Nested intervals around one predictive mean. Lower bounds are clamped
/// at zero days; `clamped` records whether any level was.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalPrediction {
    pub mean: f64,
    pub bounds: Vec<LevelBound>,
    pub clamped: bool,
}

/// Build intervals `mean +/- z*(level) * total_std` for every estimate.
pub fn build_intervals(
    estimates: &[(f64, f64)],
    table: &CriticalValueTable,
) -> Vec<IntervalPrediction> {
    estimates
        .iter()
        .map(|&(mean, total_std)| {
            let mut clamped = false;
            let bounds = table
                .levels
                .iter()
                .zip(&table.z)
                .map(|(&level, &z)| {
                    let half = z * total_std;
                    let raw_lower = mean - half;
                    if raw_lower < 0.0 {
                        clamped = true;
                    }
                    LevelBound {
                        level,
                        lower: raw_lower.max(0.0),
                        upper: mean + half,
                    }
                })
                .collect();
            IntervalPrediction {
                mean,
                bounds,
                clamped,
            }
        })
        .collect()
}

/// One recalibration step: the refitted table and the realized coverage
/// per level on the following window.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingPoint {
    pub table: CriticalValueTable,
    /// Fraction of following true values inside the interval, per level.
    pub coverage: Vec<f64>,
}

/// Walk the ordered test stream: at positions `window, window + stride,
/// ...` fit critical values on the preceding `window` samples and measure
/// coverage on the (up to) `window` samples that follow.
///
/// Coverage uses the unclamped residual rule `|y - mean| <= z* total_std`,
/// which is exactly the quantity the quantile was fitted on.
pub fn rolling_calibrate(
    stream: &[CalPoint],
    window: usize,
    stride: usize,
    levels: &[f64],
) -> Result<Vec<RollingPoint>, CalibrationError> {
    if window == 0 || stride == 0 {
        return Err(CalibrationError::ZeroWindowOrStride);
    }
    if stream.len() < window + stride {
        return Err(CalibrationError::StreamTooShort {
            len: stream.len(),
            window,
            stride,
        });
    }
    let mut out = Vec::new();
    let mut pos = window;
    while pos < stream.len() {
        let table = fit_at(&stream[pos - window..pos], levels, pos)?;
        let ahead = &stream[pos..(pos + window).min(stream.len())];
        let coverage = table
            .z
            .iter()
            .map(|&z| {
                let hits = ahead
                    .iter()
                    .filter(|p| fmath::abs(p.target - p.mean) <= z * p.total_std)
                    .count();
                hits as f64 / ahead.len() as f64
            })
            .collect();
        out.push(RollingPoint { table, coverage });
        pos += stride;
    }
    Ok(out)
}
