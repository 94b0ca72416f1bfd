//! Neural building blocks: embeddings, weight-space dropout (fixed
//! Bernoulli and the concrete relaxation), 1-D convolution blocks, a
//! variational LSTM cell with per-matrix masks, and the doubled dense head
//! that emits a mean together with a log-variance.
//!
//! Dropout here masks *weights*, not activations: convolution kernels and
//! every one of the eight LSTM matrices carry their own mask, sampled once
//! per forward pass and (for the LSTM) reused across all timesteps.

mod model;

pub use model::{
    Arch, BoundModel, ForwardOut, Model, ModelSpec, Param, ParamStore, INITIAL_DROPOUT_P,
};

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Graph, GraphError, NodeId};
use crate::fmath;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayerError {
    #[error("dropout probability must lie in [0, 1), got {0}")]
    BadDropoutProbability(f64),
    #[error("concrete relaxation temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("categorical index {index} exceeds vocabulary size {size} for embedding {feature}")]
    Encoding {
        feature: usize,
        index: usize,
        size: usize,
    },
    #[error("model spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How dropout is configured for a model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DropoutMode {
    None,
    /// Bernoulli masks with a fixed drop probability.
    Fixed(f64),
    /// Learnable drop probability via the concrete relaxation.
    Concrete,
}

impl DropoutMode {
    pub fn validate(&self) -> Result<(), LayerError> {
        if let DropoutMode::Fixed(p) = self {
            if !(0.0..1.0).contains(p) {
                return Err(LayerError::BadDropoutProbability(*p));
            }
        }
        Ok(())
    }
}

/// Drop probability in logit space, clamped so it never collapses onto 0
/// or 1 in finite precision.
pub fn dropout_probability(p_logit: f64) -> f64 {
    fmath::sigmoid(p_logit).clamp(1e-7, 1.0 - 1e-7)
}

/// logit(p), the inverse of [`dropout_probability`].
pub fn probability_logit(p: f64) -> f64 {
    fmath::logit(p)
}

/// Bernoulli keep mask with inverted scaling: entries are `0` with
/// probability `p` and `1/(1-p)` otherwise, so the masked value is an
/// unbiased estimate of the unmasked one.
pub fn bernoulli_mask(shape: &[usize], p: f64, rng: &mut Rng) -> Tensor {
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| if rng.bernoulli(keep) { scale } else { 0.0 })
        .collect();
    Tensor::new(shape, data).expect("mask shape")
}

/// Activation-level Bernoulli dropout. Identity when `training` is false
/// or `p == 0`.
pub fn bernoulli_dropout(
    g: &mut Graph,
    x: NodeId,
    p: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<NodeId, LayerError> {
    if !(0.0..1.0).contains(&p) {
        return Err(LayerError::BadDropoutProbability(p));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let mask = bernoulli_mask(g.value(x).shape(), p, rng);
    let m = g.constant(mask);
    Ok(g.mul(x, m)?)
}

/// Output of [`concrete_dropout`]: the masked value plus the intermediate
/// nodes the regularizer needs.
#[derive(Debug, Clone, Copy)]
pub struct ConcreteOut {
    pub out: NodeId,
    /// Soft keep mask `(1 - z) / (1 - p)`, differentiable w.r.t. `p_logit`.
    pub scaled_keep: NodeId,
    /// `p = sigmoid(p_logit)` as a `[1]` node.
    pub p: NodeId,
}

/// Concrete-dropout mask applied to `x`.
///
/// With `p = sigmoid(p_logit)` and per-element uniforms `u`:
/// `z = sigmoid((logit(p) + logit(u)) / t)` and the output is
/// `x * (1 - z) / (1 - p)`, differentiable w.r.t. both `x` and `p_logit`.
pub fn concrete_dropout(
    g: &mut Graph,
    x: NodeId,
    p_logit: NodeId,
    temperature: f64,
    rng: &mut Rng,
) -> Result<ConcreteOut, LayerError> {
    if temperature <= 0.0 {
        return Err(LayerError::BadTemperature(temperature));
    }
    let shape = g.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    // logit(u) for u in the open unit interval; drawn once, held constant.
    let noise: Vec<f64> = (0..n).map(|_| fmath::logit(rng.unit_open())).collect();
    let noise = g.constant(Tensor::new(&shape, noise).expect("noise shape"));
    // logit(p) is exactly the raw p_logit.
    let shifted = g.scalar_add(noise, p_logit)?;
    let sharpened = g.affine(shifted, 1.0 / temperature, 0.0);
    let z = g.sigmoid(sharpened);
    let keep = g.affine(z, -1.0, 1.0);
    let p = g.sigmoid(p_logit);
    let one_minus_p = g.affine(p, -1.0, 1.0);
    let inv_keep_prob = g.recip(one_minus_p);
    let scaled_keep = g.scalar_mul(keep, inv_keep_prob)?;
    let out = g.mul(x, scaled_keep)?;
    Ok(ConcreteOut {
        out,
        scaled_keep,
        p,
    })
}

/// Per-timestep concatenation of embedding vectors and standardized
/// numerics. Padding index 0 maps to the zero vector and the numeric slots
/// of padding rows are already zero, so padded rows stay all-zero.
pub fn embed_and_stack(
    g: &mut Graph,
    batch: &crate::eventlog::WindowBatch,
    tables: &[NodeId],
) -> Result<NodeId, LayerError> {
    assert_eq!(tables.len(), batch.n_categorical, "one table per feature");
    let rows = batch.batch * batch.sequence_length;
    let mut parts: Vec<NodeId> = Vec::with_capacity(tables.len() + 1);
    for (f, &table) in tables.iter().enumerate() {
        let idx: Vec<usize> = (0..rows)
            .map(|j| batch.categorical[j * batch.n_categorical + f])
            .collect();
        let size = g.value(table).shape()[0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= size) {
            return Err(LayerError::Encoding {
                feature: f,
                index: bad,
                size,
            });
        }
        parts.push(g.gather_rows(table, &idx, true)?);
    }
    if batch.n_numeric > 0 {
        let numeric = Tensor::new(&[rows, batch.n_numeric], batch.numeric.clone())
            .expect("numeric window shape");
        parts.push(g.constant(numeric));
    }
    let stacked = g.concat_cols(&parts)?;
    let channels = g.value(stacked).shape()[1];
    Ok(g.reshape(stacked, &[batch.batch, batch.sequence_length, channels])?)
}

/// One convolution block: cross-correlation with an (optionally masked)
/// kernel, bias add, rectifier.
pub fn conv1d_block(
    g: &mut Graph,
    x: NodeId,
    kernel: NodeId,
    bias: NodeId,
) -> Result<NodeId, LayerError> {
    let c = g.conv1d(x, kernel)?;
    let c = g.add_bias(c, bias)?;
    Ok(g.relu(c))
}

/// Unmasked parameter nodes of one LSTM layer, gate order `i, f, g, o`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParamNodes {
    pub wx: [NodeId; 4],
    pub wh: [NodeId; 4],
    pub bias: [NodeId; 4],
}

/// Multiplicative masks for the eight LSTM weight matrices (inverse-keep
/// scaling included). `None` means no dropout on that matrix. Masks are
/// sampled once per sequence and reused across timesteps.
#[derive(Debug, Clone, Copy, Default)]
pub struct LstmMasks {
    pub wx: [Option<NodeId>; 4],
    pub wh: [Option<NodeId>; 4],
}

fn apply_mask(g: &mut Graph, w: NodeId, mask: Option<NodeId>) -> Result<NodeId, GraphError> {
    match mask {
        Some(m) => g.mul(w, m),
        None => Ok(w),
    }
}

/// Standard LSTM gate arithmetic with every weight matrix element-wise
/// multiplied by its mask.
pub fn lstm_cell_variational(
    g: &mut Graph,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    params: &LstmParamNodes,
    masks: &LstmMasks,
) -> Result<(NodeId, NodeId), LayerError> {
    let mut gates = [None::<NodeId>; 4];
    for k in 0..4 {
        let wx = apply_mask(g, params.wx[k], masks.wx[k])?;
        let wh = apply_mask(g, params.wh[k], masks.wh[k])?;
        let from_x = g.matmul(x_t, wx)?;
        let from_h = g.matmul(h_prev, wh)?;
        let pre = g.add(from_x, from_h)?;
        gates[k] = Some(g.add_bias(pre, params.bias[k])?);
    }
    let [gi, gf, gg, go] = gates.map(|n| n.expect("gate built"));
    let i = g.sigmoid(gi);
    let f = g.sigmoid(gf);
    let cand = g.tanh(gg);
    let o = g.sigmoid(go);
    let keep_old = g.mul(f, c_prev)?;
    let add_new = g.mul(i, cand)?;
    let c_t = g.add(keep_old, add_new)?;
    let c_act = g.tanh(c_t);
    let h_t = g.mul(o, c_act)?;
    Ok((h_t, c_t))
}

/// Parameter nodes of the doubled output head.
#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub mean_w: NodeId,
    pub mean_b: NodeId,
    pub log_var_w: Option<NodeId>,
    pub log_var_b: Option<NodeId>,
}

/// Mean and optional log-variance nodes, each shaped `[batch]`.
#[derive(Debug, Clone, Copy)]
pub struct HeteroHeadOutput {
    pub mean: NodeId,
    pub log_var: Option<NodeId>,
}

/// Two parallel dense projections from the feature vector: one for the
/// mean, one (when present) for the log-variance.
pub fn hetero_head(
    g: &mut Graph,
    features: NodeId,
    head: &HeadNodes,
) -> Result<HeteroHeadOutput, LayerError> {
    let batch = g.value(features).shape()[0];
    let project = |g: &mut Graph, w: NodeId, b: NodeId| -> Result<NodeId, GraphError> {
        let y = g.matmul(features, w)?;
        let y = g.add_bias(y, b)?;
        g.reshape(y, &[batch])
    };
    let mean = project(g, head.mean_w, head.mean_b)?;
    let log_var = match (head.log_var_w, head.log_var_b) {
        (Some(w), Some(b)) => Some(project(g, w, b)?),
        _ => None,
    };
    Ok(HeteroHeadOutput { mean, log_var })
}

/// Reference to a layer's drop probability for the regularizer.
#[derive(Debug, Clone, Copy)]
pub enum ProbRef {
    Fixed(f64),
    /// `[1]` node holding `p_logit`; the regularizer derives `p` from it.
    Logit(NodeId),
}

/// One weight matrix under dropout, as seen by the regularizer: the raw
/// (unmasked) weight leaf, its input dimensionality and its probability.
#[derive(Debug, Clone, Copy)]
pub struct RegLayer {
    pub weight: NodeId,
    pub fan_in: usize,
    pub p: ProbRef,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::eventlog::WindowBatch;
    use alloc::vec;

    #[test]
    fn bernoulli_p_zero_is_identity() {
        let mut g = Graph::new();
        let mut rng = Rng::new(1);
        let x = g.constant(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
        let y = bernoulli_dropout(&mut g, x, 0.0, true, &mut rng).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn bernoulli_eval_mode_is_identity() {
        let mut g = Graph::new();
        let mut rng = Rng::new(1);
        let x = g.constant(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
        let y = bernoulli_dropout(&mut g, x, 0.9, false, &mut rng).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn bernoulli_rejects_p_one() {
        let mut g = Graph::new();
        let mut rng = Rng::new(1);
        let x = g.constant(Tensor::scalar(1.0));
        assert!(matches!(
            bernoulli_dropout(&mut g, x, 1.0, true, &mut rng),
            Err(LayerError::BadDropoutProbability(_))
        ));
    }

    #[test]
    fn bernoulli_keep_fraction_matches_probability() {
        let mut rng = Rng::new(42);
        let mask = bernoulli_mask(&[100_000], 0.5, &mut rng);
        let kept = mask.data().iter().filter(|&&v| v != 0.0).count() as f64;
        let frac = kept / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "kept fraction {frac}");
    }

    #[test]
    fn inverted_scaling_preserves_expectation() {
        // E[mask * x] == x within 1% at 1e5 units.
        let mut rng = Rng::new(7);
        let p = 0.3;
        let mask = bernoulli_mask(&[100_000], p, &mut rng);
        let mean = mask.data().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.01, "mask mean {mean}");
    }

    #[test]
    fn concrete_low_temperature_thresholds() {
        // With u pinned at 0.5, logit(u) = 0 and z -> 1{p > 0.5} as t -> 0.
        let run = |p_logit_val: f64| {
            let mut g = Graph::new();
            let x = g.constant(Tensor::scalar(1.0));
            let p_logit = g.leaf(Tensor::scalar(p_logit_val));
            // Reimplement the mask chain with u fixed to 0.5.
            let noise = g.constant(Tensor::scalar(fmath::logit(0.5)));
            let shifted = g.scalar_add(noise, p_logit).unwrap();
            let sharpened = g.affine(shifted, 1.0 / 1e-9, 0.0);
            let z = g.sigmoid(sharpened);
            let _ = x;
            g.value(z).item()
        };
        assert!(run(2.0) > 1.0 - 1e-12); // p > 0.5 -> dropped
        assert!(run(-2.0) < 1e-12); // p < 0.5 -> kept
    }

    #[test]
    fn concrete_mask_mean_matches_probability() {
        // Mean of z over many units approximates p.
        let mut g = Graph::new();
        let mut rng = Rng::new(99);
        let p = 0.1;
        let x = g.constant(Tensor::filled(&[100_000], 1.0));
        let p_logit = g.leaf(Tensor::scalar(probability_logit(p)));
        let out = concrete_dropout(&mut g, x, p_logit, 0.1, &mut rng).unwrap();
        // z = 1 - keep where keep = scaled_keep * (1 - p).
        let keep_mean =
            g.value(out.scaled_keep).data().iter().sum::<f64>() / 100_000.0 * (1.0 - p);
        let z_mean = 1.0 - keep_mean;
        assert!((z_mean - p).abs() < 0.01, "z mean {z_mean}");
    }

    #[test]
    fn concrete_gradient_wrt_p_logit_matches_fd() {
        // Common random numbers: the same uniforms for every evaluation.
        let mut rng = Rng::new(2024);
        let n = 32;
        let noise: Vec<f64> = (0..n).map(|_| fmath::logit(rng.unit_open())).collect();
        let xs: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let t = 0.1;
        let rep = grad_check(
            |g, ids| {
                let x = g.constant(Tensor::from_vec(xs.clone()));
                let noise = g.constant(Tensor::from_vec(noise.clone()));
                let shifted = g.scalar_add(noise, ids[0])?;
                let sharpened = g.affine(shifted, 1.0 / t, 0.0);
                let z = g.sigmoid(sharpened);
                let keep = g.affine(z, -1.0, 1.0);
                let p = g.sigmoid(ids[0]);
                let omp = g.affine(p, -1.0, 1.0);
                let inv = g.recip(omp);
                let scaled = g.scalar_mul(keep, inv)?;
                let y = g.mul(x, scaled)?;
                let sq = g.mul(y, y)?;
                Ok(g.mean(sq))
            },
            &[Tensor::scalar(probability_logit(0.2))],
            1e-6,
            1e-9,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{}", rep.max_rel_error);
    }

    #[test]
    fn concrete_probability_stays_open() {
        for logit in [-1e9, -50.0, 0.0, 50.0, 1e9, f64::MIN, f64::MAX] {
            let p = dropout_probability(logit);
            assert!(p > 0.0 && p < 1.0, "p({logit}) = {p}");
        }
    }

    #[test]
    fn concrete_rejects_bad_temperature() {
        let mut g = Graph::new();
        let mut rng = Rng::new(1);
        let x = g.constant(Tensor::scalar(1.0));
        let pl = g.leaf(Tensor::scalar(0.0));
        assert!(matches!(
            concrete_dropout(&mut g, x, pl, 0.0, &mut rng),
            Err(LayerError::BadTemperature(_))
        ));
    }

    fn toy_batch() -> WindowBatch {
        // batch 2, seq 3, one categorical feature, one numeric.
        WindowBatch {
            batch: 2,
            sequence_length: 3,
            n_categorical: 1,
            n_numeric: 1,
            categorical: vec![0, 2, 3, 0, 0, 2],
            numeric: vec![0.0, 0.5, -0.5, 0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn embed_stack_shapes_and_padding() {
        let mut g = Graph::new();
        let table = g.leaf(
            Tensor::new(&[4, 2], vec![9.0, 9.0, 9.0, 9.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        );
        let batch = toy_batch();
        let out = embed_and_stack(&mut g, &batch, &[table]).unwrap();
        // channels = embedding dim 2 + 1 numeric.
        assert_eq!(g.value(out).shape(), &[2, 3, 3]);
        // First row of each window is padding: all zero.
        let v = g.value(out).data();
        assert_eq!(&v[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&v[9..12], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn embed_stack_all_padding_is_all_zero() {
        let mut g = Graph::new();
        let table = g.leaf(Tensor::filled(&[4, 2], 5.0));
        let batch = WindowBatch {
            batch: 1,
            sequence_length: 3,
            n_categorical: 1,
            n_numeric: 0,
            categorical: vec![0, 0, 0],
            numeric: vec![],
        };
        let out = embed_and_stack(&mut g, &batch, &[table]).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_stack_rejects_out_of_range() {
        let mut g = Graph::new();
        let table = g.leaf(Tensor::zeros(&[2, 2]));
        let batch = WindowBatch {
            batch: 1,
            sequence_length: 1,
            n_categorical: 1,
            n_numeric: 0,
            categorical: vec![5],
            numeric: vec![],
        };
        assert!(matches!(
            embed_and_stack(&mut g, &batch, &[table]),
            Err(LayerError::Encoding { index: 5, .. })
        ));
    }

    #[test]
    fn embedding_gradients_hit_only_used_rows() {
        let rep = grad_check(
            |g, ids| {
                let y = g.gather_rows(ids[0], &[1, 1, 0], true)?;
                let sq = g.mul(y, y)?;
                Ok(g.mean(sq))
            },
            &[Tensor::new(&[3, 2], vec![0.4, 0.3, -0.2, 0.8, 0.7, 0.1]).unwrap()],
            1e-6,
            1e-9,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{}", rep.max_rel_error);

        let mut g = Graph::new();
        let table =
            g.leaf(Tensor::new(&[3, 2], vec![0.4, 0.3, -0.2, 0.8, 0.7, 0.1]).unwrap());
        let y = g.gather_rows(table, &[1, 1, 0], true).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        let grad = g.grad(table).unwrap();
        assert_eq!(&grad[0..2], &[0.0, 0.0], "padding row stays untouched");
        assert_eq!(&grad[2..4], &[2.0, 2.0], "row used twice accumulates");
        assert_eq!(&grad[4..6], &[0.0, 0.0], "unused row stays zero");
    }

    #[test]
    fn conv_block_zero_dropout_equals_plain_convolution() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let k = g.leaf(Tensor::new(&[2, 1, 1], vec![1.0, 1.0]).unwrap());
        let b = g.constant(Tensor::from_vec(vec![0.0]));
        let y = conv1d_block(&mut g, x, k, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn lstm_zero_weights_give_zero_states() {
        let mut g = Graph::new();
        let zero_sq = |g: &mut Graph| g.leaf(Tensor::zeros(&[2, 2]));
        let zero_b = |g: &mut Graph| g.leaf(Tensor::zeros(&[2]));
        let params = LstmParamNodes {
            wx: [zero_sq(&mut g), zero_sq(&mut g), zero_sq(&mut g), zero_sq(&mut g)],
            wh: [zero_sq(&mut g), zero_sq(&mut g), zero_sq(&mut g), zero_sq(&mut g)],
            bias: [zero_b(&mut g), zero_b(&mut g), zero_b(&mut g), zero_b(&mut g)],
        };
        let x = g.constant(Tensor::new(&[1, 2], vec![0.7, -0.3]).unwrap());
        let h = g.constant(Tensor::zeros(&[1, 2]));
        let c = g.constant(Tensor::zeros(&[1, 2]));
        let (h1, c1) =
            lstm_cell_variational(&mut g, x, h, c, &params, &LstmMasks::default()).unwrap();
        assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_unit_matches_hand_arithmetic() {
        // Scalar cell, no dropout, one step. Weights chosen by hand:
        // wx = (i .5, f .25, g 1.0, o -.5), wh = 0, bias = (0, 0, 0, .3),
        // x = 0.8, h0 = c0 = 0.
        let mut g = Graph::new();
        let w = |g: &mut Graph, v: f64| g.leaf(Tensor::new(&[1, 1], vec![v]).unwrap());
        let b = |g: &mut Graph, v: f64| g.leaf(Tensor::from_vec(vec![v]));
        let params = LstmParamNodes {
            wx: [w(&mut g, 0.5), w(&mut g, 0.25), w(&mut g, 1.0), w(&mut g, -0.5)],
            wh: [w(&mut g, 0.0), w(&mut g, 0.0), w(&mut g, 0.0), w(&mut g, 0.0)],
            bias: [b(&mut g, 0.0), b(&mut g, 0.0), b(&mut g, 0.0), b(&mut g, 0.3)],
        };
        let x = g.constant(Tensor::new(&[1, 1], vec![0.8]).unwrap());
        let h0 = g.constant(Tensor::zeros(&[1, 1]));
        let c0 = g.constant(Tensor::zeros(&[1, 1]));
        let (h1, c1) =
            lstm_cell_variational(&mut g, x, h0, c0, &params, &LstmMasks::default()).unwrap();

        let sig = fmath::sigmoid;
        let i = sig(0.5 * 0.8);
        let gg = fmath::tanh(1.0 * 0.8);
        let o = sig(-0.5 * 0.8 + 0.3);
        let c_expect = i * gg; // f * c0 = 0
        let h_expect = o * fmath::tanh(c_expect);
        assert!((g.value(c1).item() - c_expect).abs() < 1e-15);
        assert!((g.value(h1).item() - h_expect).abs() < 1e-15);
    }

    #[test]
    fn lstm_mask_nodes_are_shared_across_timesteps() {
        // Build masks once, run a length-5 sequence, and check every step
        // multiplied the same mask values (node identity).
        let mut g = Graph::new();
        let mut rng = Rng::new(31);
        let dim = 3;
        let mk_w = |g: &mut Graph, r: &mut Rng| g.leaf(Tensor::uniform(&[dim, dim], 0.5, r));
        let mk_b = |g: &mut Graph| g.leaf(Tensor::zeros(&[dim]));
        let params = LstmParamNodes {
            wx: [
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
            ],
            wh: [
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
                mk_w(&mut g, &mut rng),
            ],
            bias: [mk_b(&mut g), mk_b(&mut g), mk_b(&mut g), mk_b(&mut g)],
        };
        let p = 0.4;
        let mask_node = |g: &mut Graph, r: &mut Rng| {
            Some(g.constant(bernoulli_mask(&[dim, dim], p, r)))
        };
        let masks = LstmMasks {
            wx: [
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
            ],
            wh: [
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
                mask_node(&mut g, &mut rng),
            ],
        };
        let snapshot: Vec<Vec<f64>> = masks
            .wx
            .iter()
            .chain(masks.wh.iter())
            .map(|m| g.value(m.unwrap()).data().to_vec())
            .collect();

        let mut h = g.constant(Tensor::zeros(&[2, dim]));
        let mut c = g.constant(Tensor::zeros(&[2, dim]));
        for step in 0..5 {
            let x = g.constant(Tensor::uniform(&[2, dim], 1.0, &mut rng));
            let (h2, c2) = lstm_cell_variational(&mut g, x, h, c, &params, &masks).unwrap();
            h = h2;
            c = c2;
            // The same mask nodes -- hence the same sampled values -- are in
            // force at every timestep.
            for (m, snap) in masks.wx.iter().chain(masks.wh.iter()).zip(&snapshot) {
                assert_eq!(g.value(m.unwrap()).data(), snap.as_slice(), "step {step}");
            }
        }
    }

    #[test]
    fn head_zero_parameters_give_zero_outputs() {
        let mut g = Graph::new();
        let feats = g.constant(Tensor::new(&[2, 3], vec![1.0; 6]).unwrap());
        let head = HeadNodes {
            mean_w: g.leaf(Tensor::zeros(&[3, 1])),
            mean_b: g.leaf(Tensor::zeros(&[1])),
            log_var_w: Some(g.leaf(Tensor::zeros(&[3, 1]))),
            log_var_b: Some(g.leaf(Tensor::zeros(&[1]))),
        };
        let out = hetero_head(&mut g, feats, &head).unwrap();
        assert_eq!(g.value(out.mean).data(), &[0.0, 0.0]);
        // log-variance 0 means unit variance.
        assert_eq!(g.value(out.log_var.unwrap()).data(), &[0.0, 0.0]);
    }

    #[test]
    fn head_gradients_pass_grad_check() {
        let mut rng = Rng::new(555);
        let feats = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let rep = grad_check(
            |g, ids| {
                let f = g.constant(feats.clone());
                let head = HeadNodes {
                    mean_w: ids[0],
                    mean_b: ids[1],
                    log_var_w: Some(ids[2]),
                    log_var_b: Some(ids[3]),
                };
                let out = hetero_head(g, f, &head).expect("head binds");
                let lv = out.log_var.expect("hetero");
                let v = g.exp(lv);
                let m2 = g.mul(out.mean, out.mean)?;
                let s = g.add(v, m2)?;
                Ok(g.mean(s))
            },
            &[
                Tensor::uniform(&[3, 1], 0.7, &mut rng),
                Tensor::uniform(&[1], 0.7, &mut rng),
                Tensor::uniform(&[3, 1], 0.7, &mut rng),
                Tensor::uniform(&[1], 0.7, &mut rng),
            ],
            1e-6,
            1e-9,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{}", rep.max_rel_error);
    }
}
