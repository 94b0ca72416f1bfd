//! Training objectives: MAE (the reported metric), the heteroscedastic
//! Gaussian negative log-likelihood with loss attenuation, and the dropout
//! regularizer (weight decay scaled by keep probability plus the mask
//! entropy) that completes the variational objective.

use alloc::vec::Vec;

use crate::autodiff::{Graph, GraphError, NodeId};
use crate::fmath;
use crate::layers::{ProbRef, RegLayer};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("mae: prediction and target lengths differ ({pred} vs {target})")]
    LengthMismatch { pred: usize, target: usize },
    #[error("mae: empty batch")]
    EmptyBatch,
    #[error("dropout regularizer: training size must be >= 1")]
    BadTrainingSize,
    #[error("dropout regularizer: length scale must be positive, got {0}")]
    BadLengthScale(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Mean absolute error in target units (fractional days).
pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    if pred.len() != target.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| fmath::abs(p - t))
        .sum();
    Ok(total / pred.len() as f64)
}

/// Gaussian negative log-likelihood with per-sample log-variance `s`:
/// `(1/N) sum_n [ 0.5 exp(-s_n) (y_n - mu_n)^2 + 0.5 s_n ]`.
///
/// Without a log-variance head (`log_var == None`) the variance is pinned
/// to 1 and the loss degenerates to `0.5 * MSE` exactly.
pub fn hetero_nll(
    g: &mut Graph,
    mean: NodeId,
    log_var: Option<NodeId>,
    target: &[f64],
) -> Result<NodeId, LossError> {
    let y = g.constant(Tensor::from_vec(target.to_vec()));
    let resid = g.sub(y, mean)?;
    let sq = g.mul(resid, resid)?;
    let per_sample = match log_var {
        Some(s) => {
            let neg_s = g.affine(s, -1.0, 0.0);
            let inv_var = g.exp(neg_s);
            let quad = g.mul(inv_var, sq)?;
            let quad = g.affine(quad, 0.5, 0.0);
            let penalty = g.affine(s, 0.5, 0.0);
            g.add(quad, penalty)?
        }
        None => g.affine(sq, 0.5, 0.0),
    };
    Ok(g.mean(per_sample))
}

/// The two components of the dropout regularizer, plus their sum.
#[derive(Debug, Clone, Copy)]
pub struct RegNodes {
    pub weight_term: NodeId,
    pub entropy_term: NodeId,
    pub total: NodeId,
}

/// Regularizer over all dropout layers: per layer with weights `W`,
/// drop probability `p` and input dimensionality `K`,
///
/// `(l^2 / N) * ||W||^2 / (1 - p)  +  (K / N) * (p log p + (1-p) log(1-p))`
///
/// summed over layers. Differentiable w.r.t. both the weights and any
/// learnable `p_logit`. With no dropout layers both terms are zero.
pub fn dropout_regularizer(
    g: &mut Graph,
    layers: &[RegLayer],
    train_size: usize,
    length_scale: f64,
) -> Result<RegNodes, LossError> {
    if train_size == 0 {
        return Err(LossError::BadTrainingSize);
    }
    if length_scale <= 0.0 {
        return Err(LossError::BadLengthScale(length_scale));
    }
    let n = train_size as f64;
    let mut weight_terms: Vec<NodeId> = Vec::with_capacity(layers.len());
    let mut entropy_terms: Vec<NodeId> = Vec::with_capacity(layers.len());
    for layer in layers {
        let sq = g.mul(layer.weight, layer.weight)?;
        let norm = g.sum(sq);
        let (weight_term, entropy_term) = match layer.p {
            ProbRef::Fixed(p) => {
                let wt = g.affine(norm, length_scale * length_scale / (n * (1.0 - p)), 0.0);
                // Entropy of a fixed p is a constant; p = 0 contributes 0.
                let h = if p > 0.0 {
                    p * fmath::ln(p) + (1.0 - p) * fmath::ln(1.0 - p)
                } else {
                    0.0
                };
                let et = g.constant(Tensor::scalar(layer.fan_in as f64 / n * h));
                (wt, et)
            }
            ProbRef::Logit(p_logit) => {
                let p = g.sigmoid(p_logit);
                let one_minus_p = g.affine(p, -1.0, 1.0);
                let inv_keep = g.recip(one_minus_p);
                let scaled = g.scalar_mul(norm, inv_keep)?;
                let wt = g.affine(scaled, length_scale * length_scale / n, 0.0);
                let ln_p = g.ln(p);
                let ln_q = g.ln(one_minus_p);
                let p_ln_p = g.mul(p, ln_p)?;
                let q_ln_q = g.mul(one_minus_p, ln_q)?;
                let h = g.add(p_ln_p, q_ln_q)?;
                let et = g.affine(h, layer.fan_in as f64 / n, 0.0);
                (wt, et)
            }
        };
        weight_terms.push(weight_term);
        entropy_terms.push(entropy_term);
    }
    let zero = g.constant(Tensor::scalar(0.0));
    let fold = |g: &mut Graph, terms: &[NodeId]| -> Result<NodeId, GraphError> {
        let mut acc = zero;
        for &t in terms {
            acc = g.add(acc, t)?;
        }
        Ok(acc)
    };
    let weight_term = fold(g, &weight_terms)?;
    let entropy_term = fold(g, &entropy_terms)?;
    let total = g.add(weight_term, entropy_term)?;
    Ok(RegNodes {
        weight_term,
        entropy_term,
        total,
    })
}

/// Scalar record of one objective evaluation. The invariant
/// `total == data_term + weight_reg_term + dropout_entropy_term` holds
/// exactly because `total` is defined as that sum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub data_term: f64,
    pub weight_reg_term: f64,
    pub dropout_entropy_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(data_term: f64, weight_reg_term: f64, dropout_entropy_term: f64) -> Self {
        LossBreakdown {
            data_term,
            weight_reg_term,
            dropout_entropy_term,
            total: data_term + weight_reg_term + dropout_entropy_term,
        }
    }
}
