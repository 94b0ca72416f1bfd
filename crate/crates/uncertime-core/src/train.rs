//! Mini-batch training with the adaptive-moment optimizer, early stopping
//! on validation MAE and seed-deterministic shuffling.
//!
//! The returned parameters are always the checkpoint of the best
//! validation epoch. Dropout is active in training passes and disabled in
//! the validation point passes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Graph;
use crate::eventlog::{batch_windows, PrefixRecord};
use crate::infer::{self, InferError};
use crate::layers::{LayerError, Model, Param};
use crate::loss::{dropout_regularizer, hetero_nll, mae, LossBreakdown, LossError};
use crate::optim::{adam_step, AdamState};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("validation split is empty")]
    EmptyVal,
    #[error("batch size must be >= 1")]
    ZeroBatchSize,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Epochs to wait past the best validation MAE; `None` disables early
    /// stopping.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            max_epochs: 100,
            learning_rate: 1e-3,
            patience: Some(10),
            seed: 0,
        }
    }
}

/// Scalars logged per epoch. Loss components are averages over batches.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub train_mae: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Zero-based index into `epochs` of the restored checkpoint.
    pub best_epoch: usize,
    /// Drop probability per dropout layer after training.
    pub dropout_probabilities: Vec<(String, f64)>,
}

impl TrainReport {
    pub fn best_val_mae(&self) -> f64 {
        self.epochs[self.best_epoch].val_mae
    }
}

/// Train `model` in place. `clock` supplies monotonic seconds for the
/// per-epoch timing column (pass `|| 0.0` where timing is unavailable).
pub fn train(
    model: &mut Model,
    train_data: &[PrefixRecord],
    val_data: &[PrefixRecord],
    cfg: &TrainConfig,
    clock: &dyn Fn() -> f64,
) -> Result<TrainReport, TrainError> {
    if train_data.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val_data.is_empty() {
        return Err(TrainError::EmptyVal);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }

    let n_train = train_data.len();
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best: Option<(f64, Vec<Param>)> = None;
    let mut best_epoch = 0usize;
    let mut epochs = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let t0 = clock();
        let mut rng = Rng::derive(cfg.seed, epoch as u64);
        rng.shuffle(&mut order);

        let mut batches = 0usize;
        let mut sum_data = 0.0;
        let mut sum_wreg = 0.0;
        let mut sum_ent = 0.0;
        let mut sum_mae = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let records: Vec<&PrefixRecord> = chunk.iter().map(|&i| &train_data[i]).collect();
            let targets: Vec<f64> = records.iter().map(|r| r.target_days).collect();
            let window = batch_windows(&records, &model.layout);

            let mut g = Graph::new();
            let bound = model.bind_forward(&mut g, &window, true, Some(&mut rng))?;
            let nll = hetero_nll(&mut g, bound.out.mean, bound.out.log_var, &targets)?;
            let reg = dropout_regularizer(
                &mut g,
                &bound.reg_layers,
                n_train,
                model.spec.length_scale,
            )?;
            let total = g.add(nll, reg.total).map_err(LayerError::from)?;

            let breakdown = LossBreakdown::new(
                g.value(nll).item(),
                g.value(reg.weight_term).item(),
                g.value(reg.entropy_term).item(),
            );
            if !breakdown.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            sum_data += breakdown.data_term;
            sum_wreg += breakdown.weight_reg_term;
            sum_ent += breakdown.dropout_entropy_term;
            sum_mae += mae(g.value(bound.out.mean).data(), &targets)?;
            batches += 1;

            g.backward(total).map_err(LayerError::from)?;
            let grads: Vec<Vec<f64>> = bound
                .param_nodes
                .iter()
                .map(|&id| g.grad(id).expect("trainable leaf").to_vec())
                .collect();
            adam_step(&mut model.params, &grads, &mut adam, cfg.learning_rate);
        }

        let val_pred = infer::predict_point(model, val_data)?;
        let val_targets: Vec<f64> = val_data.iter().map(|r| r.target_days).collect();
        let val_mae = mae(&val_pred, &val_targets)?;
        if !val_mae.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: 0 });
        }

        let b = batches.max(1) as f64;
        epochs.push(EpochRecord {
            epoch,
            loss: LossBreakdown::new(sum_data / b, sum_wreg / b, sum_ent / b),
            train_mae: sum_mae / b,
            val_mae,
            seconds: clock() - t0,
        });

        let improved = best.as_ref().map(|(m, _)| val_mae < *m).unwrap_or(true);
        if improved {
            best = Some((val_mae, model.params.entries.clone()));
            best_epoch = epoch;
        } else if let Some(patience) = cfg.patience {
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    if let Some((_, entries)) = best {
        model.params.entries = entries;
    }
    Ok(TrainReport {
        epochs,
        best_epoch,
        dropout_probabilities: model.dropout_probabilities(),
    })
}
