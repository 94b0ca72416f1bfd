//! Point prediction and Monte-Carlo-dropout predictive distributions with
//! the epistemic/aleatoric decomposition.
//!
//! `T` stochastic forward passes, each under a freshly sampled weight mask,
//! yield per-sample draws `(yhat_t, sigma2_t)`. The estimate is
//!
//! * `mean`          = (1/T) sum_t yhat_t
//! * `epistemic_var` = (1/T) sum_t yhat_t^2 - mean^2   (biased form)
//! * `aleatoric_var` = (1/T) sum_t sigma2_t
//! * `total_var`     = epistemic_var + aleatoric_var   (exact by definition)
//!
//! Sums run over the draws in ascending value order, so every field is
//! invariant under permutations of the stored samples. Mask streams are
//! derived per pass index only, which makes results independent of how a
//! batch is chunked or distributed across threads.

use alloc::vec::Vec;

use crate::autodiff::Graph;
use crate::eventlog::{batch_windows, PrefixRecord};
use crate::fmath;
use crate::layers::{DropoutMode, LayerError, Model, ModelSpec};
use crate::rng::Rng;
use crate::stats;
use crate::synth::{gen_regression1d, regression_records, NoiseProfile, Regression1dSpec};
use crate::train::{train, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferError {
    #[error("monte-carlo prediction needs at least 2 passes (got {0}); set allow_single to accept a degenerate single pass")]
    TooFewSamples(usize),
    #[error("monte-carlo prediction requires a dropout-trained model; dropout mode is none")]
    NoDropout,
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Per-prediction uncertainty decomposition in fractional days.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UncertaintyEstimate {
    pub mean: f64,
    pub epistemic_var: f64,
    pub aleatoric_var: f64,
    pub total_var: f64,
    pub total_std: f64,
    /// Number of stochastic passes behind this estimate.
    pub samples: usize,
    /// Set when a single pass was explicitly permitted; epistemic variance
    /// is reported as zero in that case.
    pub single_pass: bool,
}

/// Sum in ascending value order (permutation-stable).
fn ordered_mean(values: &[f64]) -> f64 {
    if values
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits())
    {
        // Mean of identical draws is that draw, exactly.
        return values[0];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn ordered_mean_of_squares(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().map(|v| v * v).sum::<f64>() / sorted.len() as f64
}

/// Collapse the retained draws of one sample into an estimate.
pub fn estimate_from_draws(mean_draws: &[f64], aleatoric_draws: &[f64]) -> UncertaintyEstimate {
    assert!(!mean_draws.is_empty(), "at least one draw");
    assert_eq!(mean_draws.len(), aleatoric_draws.len());
    let t = mean_draws.len();
    let mean = ordered_mean(mean_draws);
    let all_equal = mean_draws
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits());
    let epistemic_var = if all_equal || t == 1 {
        0.0
    } else {
        (ordered_mean_of_squares(mean_draws) - mean * mean).max(0.0)
    };
    let aleatoric_var = ordered_mean(aleatoric_draws).max(0.0);
    let total_var = epistemic_var + aleatoric_var;
    UncertaintyEstimate {
        mean,
        epistemic_var,
        aleatoric_var,
        total_var,
        total_std: fmath::sqrt(total_var),
        samples: t,
        single_pass: t == 1,
    }
}

/// Monte-Carlo sampling configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McConfig {
    /// Stochastic forward passes per prediction.
    pub samples: usize,
    pub seed: u64,
    /// Permit `samples == 1`; the estimate is then flagged and its
    /// epistemic variance reported as zero.
    pub allow_single: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 50,
            seed: 0,
            allow_single: false,
        }
    }
}

/// Raw retained draws: outer index is the pass, inner the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct McDraws {
    pub means: Vec<Vec<f64>>,
    pub aleatoric_vars: Vec<Vec<f64>>,
}

/// Rows per forward chunk; bounds graph memory without changing results.
const CHUNK: usize = 1024;

fn forward_chunk(
    model: &Model,
    records: &[&PrefixRecord],
    stochastic: bool,
    rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, Vec<f64>), LayerError> {
    let window = batch_windows(records, &model.layout);
    let mut g = Graph::new();
    let bound = model.bind_forward(&mut g, &window, stochastic, rng)?;
    let means = g.value(bound.out.mean).data().to_vec();
    let ale = match bound.out.log_var {
        Some(lv) => g.value(lv).data().iter().map(|&s| fmath::exp(s)).collect(),
        None => alloc::vec![0.0; records.len()],
    };
    Ok((means, ale))
}

/// Deterministic point prediction: dropout disabled, mean head only.
pub fn predict_point(model: &Model, records: &[PrefixRecord]) -> Result<Vec<f64>, InferError> {
    let mut out = Vec::with_capacity(records.len());
    let refs: Vec<&PrefixRecord> = records.iter().collect();
    for chunk in refs.chunks(CHUNK) {
        let (means, _) = forward_chunk(model, chunk, false, None)?;
        out.extend(means);
    }
    Ok(out)
}

/// Monte-Carlo prediction with retained raw draws.
pub fn mc_predict_with_draws(
    model: &Model,
    records: &[PrefixRecord],
    cfg: &McConfig,
) -> Result<(Vec<UncertaintyEstimate>, McDraws), InferError> {
    if cfg.samples == 0 || (cfg.samples < 2 && !cfg.allow_single) {
        return Err(InferError::TooFewSamples(cfg.samples));
    }
    if matches!(model.spec.dropout, DropoutMode::None) {
        return Err(InferError::NoDropout);
    }
    let n = records.len();
    let refs: Vec<&PrefixRecord> = records.iter().collect();
    let mut means = alloc::vec![Vec::with_capacity(n); cfg.samples];
    let mut ales = alloc::vec![Vec::with_capacity(n); cfg.samples];
    for chunk in refs.chunks(CHUNK) {
        for t in 0..cfg.samples {
            // One substream per pass index: masks do not depend on how the
            // batch was chunked.
            let mut rng = Rng::derive(cfg.seed, t as u64);
            let (m, a) = forward_chunk(model, chunk, true, Some(&mut rng))?;
            means[t].extend(m);
            ales[t].extend(a);
        }
    }
    let estimates = (0..n)
        .map(|i| {
            let m: Vec<f64> = means.iter().map(|pass| pass[i]).collect();
            let a: Vec<f64> = ales.iter().map(|pass| pass[i]).collect();
            estimate_from_draws(&m, &a)
        })
        .collect();
    Ok((
        estimates,
        McDraws {
            means,
            aleatoric_vars: ales,
        },
    ))
}

/// Monte-Carlo prediction; draws are discarded.
pub fn mc_predict(
    model: &Model,
    records: &[PrefixRecord],
    cfg: &McConfig,
) -> Result<Vec<UncertaintyEstimate>, InferError> {
    mc_predict_with_draws(model, records, cfg).map(|(e, _)| e)
}

/// Protocol for the data-size sweep checking that epistemic uncertainty
/// shrinks as the training set grows.
#[derive(Debug, Clone)]
pub struct ShrinkageConfig {
    pub noise: NoiseProfile,
    pub seeds: Vec<u64>,
    pub grid_points: usize,
    pub mc_samples: usize,
    pub train: TrainConfig,
    pub model: ModelSpec,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig {
            noise: NoiseProfile::default(),
            seeds: alloc::vec![0],
            grid_points: 64,
            mc_samples: 50,
            train: TrainConfig {
                batch_size: 64,
                max_epochs: 60,
                learning_rate: 3e-3,
                patience: None,
                seed: 0,
            },
            model: ModelSpec {
                arch: crate::layers::Arch::Cnn,
                embedding_dims: Vec::new(),
                conv_channels: alloc::vec![16],
                kernel_size: 1,
                dense_width: 32,
                lstm_hidden: 16,
                dropout: DropoutMode::Concrete,
                heteroscedastic: true,
                temperature: 0.1,
                length_scale: 1e-2,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkageReport {
    pub sizes: Vec<usize>,
    /// Mean epistemic variance on the held-out grid, averaged over seeds.
    pub mean_epistemic: Vec<f64>,
    /// Mean aleatoric variance on the grid, averaged over seeds.
    pub mean_aleatoric: Vec<f64>,
    /// Rank correlation between size and mean epistemic variance;
    /// `None` with fewer than two sizes.
    pub spearman: Option<f64>,
}

/// Train one model per training-set size (same protocol, per-seed data and
/// initialization) and measure mean epistemic variance on a fixed grid.
pub fn epistemic_shrinks_with_data(
    cfg: &ShrinkageConfig,
    sizes: &[usize],
) -> Result<ShrinkageReport, TrainError> {
    assert!(!sizes.is_empty(), "at least one size");
    assert!(!cfg.seeds.is_empty(), "at least one seed");
    let grid: Vec<PrefixRecord> = {
        let step = 6.0 / (cfg.grid_points.max(2) - 1) as f64;
        (0..cfg.grid_points)
            .map(|i| PrefixRecord {
                case_id: alloc::format!("g{i}"),
                prefix_length: 1,
                categorical: Vec::new(),
                numeric: alloc::vec![-3.0 + i as f64 * step],
                target_days: 0.0,
                case_start: 0,
                event_timestamp: 0,
            })
            .collect()
    };
    let layout = crate::eventlog::FeatureLayout {
        categorical_vocab_sizes: Vec::new(),
        numeric_count: 1,
        sequence_length: 1,
    };

    let mut mean_epistemic = alloc::vec![0.0; sizes.len()];
    let mut mean_aleatoric = alloc::vec![0.0; sizes.len()];
    for &seed in &cfg.seeds {
        for (si, &size) in sizes.iter().enumerate() {
            let data = gen_regression1d(&Regression1dSpec {
                n: size,
                noise: cfg.noise,
                seed: seed ^ (size as u64).rotate_left(13),
                ..Regression1dSpec::default()
            });
            let records = regression_records(&data);
            let n_val = (records.len() / 5).max(1);
            let (fit, val) = records.split_at(records.len() - n_val);
            let mut model = Model::init(cfg.model.clone(), layout.clone(), seed)?;
            let train_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            train(&mut model, fit, val, &train_cfg, &|| 0.0)?;
            let est = mc_predict(
                &model,
                &grid,
                &McConfig {
                    samples: cfg.mc_samples,
                    seed,
                    allow_single: false,
                },
            )?;
            let epi: Vec<f64> = est.iter().map(|e| e.epistemic_var).collect();
            let ale: Vec<f64> = est.iter().map(|e| e.aleatoric_var).collect();
            mean_epistemic[si] += stats::mean(&epi) / cfg.seeds.len() as f64;
            mean_aleatoric[si] += stats::mean(&ale) / cfg.seeds.len() as f64;
        }
    }
    let spearman = (sizes.len() >= 2).then(|| {
        let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        stats::spearman(&xs, &mean_epistemic)
    });
    Ok(ShrinkageReport {
        sizes: sizes.to_vec(),
        mean_epistemic,
        mean_aleatoric,
        spearman,
    })
}
