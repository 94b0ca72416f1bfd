//! Evaluation analyses: uncertainty-ranked retention curves, uncertainty
//! heatmaps over prefix length x remaining days, and cross-variant MAE
//! comparison tables.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::fmath;
use crate::loss;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("retention curve needs at least {min} predictions, got {got}")]
    TooFewPredictions { min: usize, got: usize },
    #[error("prediction {index} is missing {field}")]
    MissingField { index: usize, field: &'static str },
    #[error("comparison needs at least one variant")]
    NoVariants,
    #[error("variant `{name}` was evaluated on a different test set")]
    MismatchedTestSets { name: String },
    #[error("normalization variant `{0}` is not in the comparison")]
    UnknownBaseline(String),
    #[error(transparent)]
    Loss(#[from] loss::LossError),
}

/// One prediction row as it appears in the prediction CSVs. Uncertainty
/// columns are absent for baselines.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredRow {
    pub case_id: String,
    pub prefix_length: usize,
    pub target: Option<f64>,
    pub mean: f64,
    pub epistemic_var: Option<f64>,
    pub aleatoric_var: Option<f64>,
    pub total_std: Option<f64>,
}

impl PredRow {
    fn target_at(&self, index: usize) -> Result<f64, EvalError> {
        self.target.ok_or(EvalError::MissingField {
            index,
            field: "target",
        })
    }

    fn total_var_at(&self, index: usize) -> Result<f64, EvalError> {
        self.total_std
            .map(|s| s * s)
            .ok_or(EvalError::MissingField {
                index,
                field: "total_std",
            })
    }
}

pub const DEFAULT_SHARES: [f64; 6] = [1.0, 0.75, 0.50, 0.25, 0.10, 0.05];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetentionPoint {
    pub share: f64,
    pub count: usize,
    pub mae: f64,
}

/// MAE over the most-certain `share` of predictions, per share,
/// shares descending.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetentionCurve {
    pub points: Vec<RetentionPoint>,
}

/// Rank predictions by total variance ascending (stable: ties keep input
/// order) and report MAE of the best `ceil(share * N)` at every share.
pub fn retention_curve(rows: &[PredRow], shares: &[f64]) -> Result<RetentionCurve, EvalError> {
    const MIN_N: usize = 20;
    if rows.len() < MIN_N {
        return Err(EvalError::TooFewPredictions {
            min: MIN_N,
            got: rows.len(),
        });
    }
    let mut scored = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        scored.push((r.total_var_at(i)?, r.target_at(i)?, r.mean));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut shares = shares.to_vec();
    shares.sort_by(|a, b| b.total_cmp(a));
    shares.dedup();
    let n = scored.len() as f64;
    let mut points = Vec::with_capacity(shares.len());
    for &share in &shares {
        let count = (fmath::ceil(share * n) as usize).clamp(1, scored.len());
        let kept = &scored[..count];
        let pred: Vec<f64> = kept.iter().map(|s| s.2).collect();
        let target: Vec<f64> = kept.iter().map(|s| s.1).collect();
        points.push(RetentionPoint {
            share,
            count,
            mae: loss::mae(&pred, &target)?,
        });
    }
    Ok(RetentionCurve { points })
}

/// Binning scheme of the heatmap.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeatmapSpec {
    /// Prefix lengths 1..=cap; longer prefixes pool into the cap bin.
    pub prefix_cap: usize,
    /// Lower edges of the remaining-days bins after the first; bin 0 is
    /// `[0, edges[0])`, the last bin is open-ended.
    pub day_edges: Vec<f64>,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        HeatmapSpec {
            prefix_cap: 10,
            day_edges: alloc::vec![5.0, 10.0, 20.0, 50.0],
        }
    }
}

impl HeatmapSpec {
    pub fn day_bins(&self) -> usize {
        self.day_edges.len() + 1
    }

    pub fn day_bin(&self, days: f64) -> usize {
        self.day_edges.iter().filter(|&&e| days >= e).count()
    }

    pub fn prefix_bin(&self, len: usize) -> usize {
        len.clamp(1, self.prefix_cap) - 1
    }

    /// Human-readable label of a remaining-days bin.
    pub fn day_label(&self, bin: usize) -> String {
        let lo = if bin == 0 { 0.0 } else { self.day_edges[bin - 1] };
        if bin == self.day_edges.len() {
            alloc::format!(">={lo}")
        } else {
            alloc::format!("[{lo},{})", self.day_edges[bin])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeatCell {
    /// 0-based: prefix length bin (length 1 is bin 0).
    pub prefix_bin: usize,
    pub day_bin: usize,
    pub count: usize,
    pub mean_total_var: f64,
    pub mean_total_std: f64,
}

/// Mean total uncertainty and frequency per (prefix length, remaining
/// days) cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UncertaintyHeatmap {
    pub spec: HeatmapSpec,
    pub cells: Vec<HeatCell>,
    pub total: usize,
}

pub fn uncertainty_heatmap(
    rows: &[PredRow],
    spec: &HeatmapSpec,
) -> Result<UncertaintyHeatmap, EvalError> {
    let bins = spec.prefix_cap * spec.day_bins();
    let mut count = alloc::vec![0usize; bins];
    let mut var_sum = alloc::vec![0.0f64; bins];
    let mut std_sum = alloc::vec![0.0f64; bins];
    for (i, r) in rows.iter().enumerate() {
        let target = r.target_at(i)?;
        let var = r.total_var_at(i)?;
        let cell = spec.prefix_bin(r.prefix_length) * spec.day_bins() + spec.day_bin(target);
        count[cell] += 1;
        var_sum[cell] += var;
        std_sum[cell] += fmath::sqrt(var);
    }
    let cells = (0..bins)
        .filter(|&c| count[c] > 0)
        .map(|c| HeatCell {
            prefix_bin: c / spec.day_bins(),
            day_bin: c % spec.day_bins(),
            count: count[c],
            mean_total_var: var_sum[c] / count[c] as f64,
            mean_total_std: std_sum[c] / count[c] as f64,
        })
        .collect();
    Ok(UncertaintyHeatmap {
        spec: spec.clone(),
        cells,
        total: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonRow {
    pub name: String,
    pub mae: f64,
    /// MAE divided by the reference variant's MAE, when requested.
    pub normalized: Option<f64>,
}

/// MAE per variant on the identical test set; optionally normalized so the
/// named reference variant reads 1.0.
pub fn compare_models(
    variants: &[(String, Vec<PredRow>)],
    normalize_to: Option<&str>,
) -> Result<Vec<ComparisonRow>, EvalError> {
    if variants.is_empty() {
        return Err(EvalError::NoVariants);
    }
    // All variants must score the same (case, prefix, target) stream.
    let reference: Vec<(&str, usize, Option<f64>)> = variants[0]
        .1
        .iter()
        .map(|r| (r.case_id.as_str(), r.prefix_length, r.target))
        .collect();
    for (name, rows) in variants.iter().skip(1) {
        let same = rows.len() == reference.len()
            && rows
                .iter()
                .zip(&reference)
                .all(|(r, (cid, plen, t))| {
                    r.case_id == *cid && r.prefix_length == *plen && r.target == *t
                });
        if !same {
            return Err(EvalError::MismatchedTestSets { name: name.clone() });
        }
    }
    let mut rows = Vec::with_capacity(variants.len());
    for (name, preds) in variants {
        let mut p = Vec::with_capacity(preds.len());
        let mut t = Vec::with_capacity(preds.len());
        for (i, r) in preds.iter().enumerate() {
            p.push(r.mean);
            t.push(r.target_at(i)?);
        }
        rows.push(ComparisonRow {
            name: name.clone(),
            mae: loss::mae(&p, &t)?,
            normalized: None,
        });
    }
    if let Some(base) = normalize_to {
        let base_mae = rows
            .iter()
            .find(|r| r.name == base)
            .ok_or_else(|| EvalError::UnknownBaseline(base.to_string()))?
            .mae;
        for r in rows.iter_mut() {
            r.normalized = Some(r.mae / base_mae);
        }
    }
    Ok(rows)
}
