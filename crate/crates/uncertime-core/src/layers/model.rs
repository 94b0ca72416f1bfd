//! Model assembly: a configurable CNN or variational LSTM over encoded
//! prefix windows, ending in the doubled mean/log-variance head.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::{Graph, NodeId};
use crate::eventlog::{FeatureLayout, WindowBatch};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{
    bernoulli_mask, concrete_dropout, dropout_probability, embed_and_stack, hetero_head,
    lstm_cell_variational, probability_logit, DropoutMode, HeadNodes, LayerError, LstmMasks,
    LstmParamNodes, ProbRef, RegLayer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arch {
    Cnn,
    Lstm,
}

/// Architecture and regularization knobs of one model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub arch: Arch,
    /// Embedding width per categorical feature (activity first).
    pub embedding_dims: Vec<usize>,
    /// Output channels of each convolution block.
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    /// Width of the dense layer after flattening (CNN only).
    pub dense_width: usize,
    /// Hidden size of the recurrent layer (LSTM only).
    pub lstm_hidden: usize,
    pub dropout: DropoutMode,
    pub heteroscedastic: bool,
    /// Concrete-relaxation temperature.
    pub temperature: f64,
    /// Prior length-scale of the dropout regularizer.
    pub length_scale: f64,
}

impl ModelSpec {
    pub fn cnn(embedding_dims: Vec<usize>) -> Self {
        ModelSpec {
            arch: Arch::Cnn,
            embedding_dims,
            conv_channels: alloc::vec![32, 32],
            kernel_size: 3,
            dense_width: 64,
            lstm_hidden: 64,
            dropout: DropoutMode::Concrete,
            heteroscedastic: true,
            temperature: 0.1,
            length_scale: 1e-2,
        }
    }

    pub fn lstm(embedding_dims: Vec<usize>) -> Self {
        ModelSpec {
            arch: Arch::Lstm,
            ..ModelSpec::cnn(embedding_dims)
        }
    }

    pub fn validate(&self, layout: &FeatureLayout) -> Result<(), LayerError> {
        self.dropout.validate()?;
        if self.temperature <= 0.0 {
            return Err(LayerError::BadTemperature(self.temperature));
        }
        if self.length_scale <= 0.0 {
            return Err(LayerError::Spec("length_scale must be positive".into()));
        }
        if self.embedding_dims.len() != layout.categorical_vocab_sizes.len() {
            return Err(LayerError::Spec(alloc::format!(
                "{} embedding dims declared for {} categorical features",
                self.embedding_dims.len(),
                layout.categorical_vocab_sizes.len()
            )));
        }
        if self.embedding_dims.contains(&0) {
            return Err(LayerError::Spec("embedding dims must be positive".into()));
        }
        match self.arch {
            Arch::Cnn => {
                if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
                    return Err(LayerError::Spec(
                        "conv_channels must be non-empty and positive".into(),
                    ));
                }
                if self.dense_width == 0 {
                    return Err(LayerError::Spec("dense_width must be positive".into()));
                }
                if self.kernel_size == 0 {
                    return Err(LayerError::Spec("kernel_size must be positive".into()));
                }
                let shrink = self.conv_channels.len() * (self.kernel_size - 1);
                if layout.sequence_length <= shrink {
                    return Err(LayerError::Spec(alloc::format!(
                        "kernel {} over {} blocks needs sequence_length > {}, got {}",
                        self.kernel_size,
                        self.conv_channels.len(),
                        shrink,
                        layout.sequence_length
                    )));
                }
            }
            Arch::Lstm => {
                if self.lstm_hidden == 0 {
                    return Err(LayerError::Spec("lstm_hidden must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn input_channels(&self, layout: &FeatureLayout) -> usize {
        self.embedding_dims.iter().sum::<usize>() + layout.numeric_count
    }
}

/// Index into a [`ParamStore`].
pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named parameter tensors in a fixed order; the checkpoint format and the
/// optimizer state both align to this order.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamStore {
    pub entries: Vec<Param>,
}

impl ParamStore {
    fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.entries.push(Param {
            name: name.to_string(),
            value,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id].value
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }
}

/// A weight matrix that carries a dropout mask, plus the probability that
/// governs it (fixed or a learnable logit parameter).
#[derive(Debug, Clone)]
struct DropoutUnit {
    weight: ParamId,
    fan_in: usize,
    p_logit: Option<ParamId>,
}

#[derive(Debug, Clone)]
struct ConvBlockPlan {
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct LstmPlan {
    wx: [ParamId; 4],
    wh: [ParamId; 4],
    bias: [ParamId; 4],
}

#[derive(Debug, Clone)]
struct HeadPlan {
    mean_w: ParamId,
    mean_b: ParamId,
    log_var_w: Option<ParamId>,
    log_var_b: Option<ParamId>,
}

#[derive(Debug, Clone)]
enum ArchPlan {
    Cnn {
        blocks: Vec<ConvBlockPlan>,
        dense_w: ParamId,
        dense_b: ParamId,
    },
    Lstm(LstmPlan),
}

/// Mean and optional log-variance nodes of a bound forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOut {
    pub mean: NodeId,
    pub log_var: Option<NodeId>,
}

/// A forward pass bound into a [`Graph`]: the output head, one leaf node
/// per parameter (aligned with the parameter store) and the dropout layers
/// as the regularizer sees them.
pub struct BoundModel {
    pub out: ForwardOut,
    pub param_nodes: Vec<NodeId>,
    pub reg_layers: Vec<RegLayer>,
}

/// A parameterized network over encoded prefix windows.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layout: FeatureLayout,
    pub params: ParamStore,
    embeddings: Vec<ParamId>,
    plan: ArchPlan,
    head: HeadPlan,
    dropout_units: Vec<DropoutUnit>,
}

/// Initial drop probability before any learning happens.
pub const INITIAL_DROPOUT_P: f64 = 0.1;

impl Model {
    /// Seeded initialization: uniform fan-in weights, zero biases (LSTM
    /// forget gate bias 1.0), concrete logits at `logit(0.1)`.
    pub fn init(spec: ModelSpec, layout: FeatureLayout, seed: u64) -> Result<Self, LayerError> {
        spec.validate(&layout)?;
        let mut rng = Rng::derive(seed, 0x1217);
        let mut params = ParamStore::default();
        let mut dropout_units = Vec::new();

        let mut embeddings = Vec::new();
        for (f, (&vocab, &dim)) in layout
            .categorical_vocab_sizes
            .iter()
            .zip(&spec.embedding_dims)
            .enumerate()
        {
            let bound = fan_in_bound(dim);
            let mut table = Tensor::uniform(&[vocab, dim], bound, &mut rng);
            // Padding row pinned to zero; it also never receives gradient.
            for v in table.data_mut()[..dim].iter_mut() {
                *v = 0.0;
            }
            embeddings.push(params.add(&alloc::format!("embed{f}.table"), table));
        }

        let learnable_p = matches!(spec.dropout, DropoutMode::Concrete);
        let has_dropout = !matches!(spec.dropout, DropoutMode::None);
        let init_logit = probability_logit(INITIAL_DROPOUT_P);
        let add_unit =
            |params: &mut ParamStore, dropout_units: &mut Vec<DropoutUnit>, name: &str, weight: ParamId, fan_in: usize| {
                if !has_dropout {
                    return;
                }
                let p_logit = learnable_p.then(|| {
                    params.add(
                        &alloc::format!("{name}.p_logit"),
                        Tensor::scalar(init_logit),
                    )
                });
                dropout_units.push(DropoutUnit {
                    weight,
                    fan_in,
                    p_logit,
                });
            };

        let in_channels = spec.input_channels(&layout);
        let (plan, head_in) = match spec.arch {
            Arch::Cnn => {
                let mut blocks = Vec::new();
                let mut ci = in_channels;
                let mut seq = layout.sequence_length;
                for (b, &co) in spec.conv_channels.iter().enumerate() {
                    let fan_in = spec.kernel_size * ci;
                    let kernel = params.add(
                        &alloc::format!("conv{b}.kernel"),
                        Tensor::uniform(&[spec.kernel_size, ci, co], fan_in_bound(fan_in), &mut rng),
                    );
                    let bias = params.add(&alloc::format!("conv{b}.bias"), Tensor::zeros(&[co]));
                    add_unit(
                        &mut params,
                        &mut dropout_units,
                        &alloc::format!("conv{b}"),
                        kernel,
                        fan_in,
                    );
                    blocks.push(ConvBlockPlan { kernel, bias });
                    ci = co;
                    seq -= spec.kernel_size - 1;
                }
                let flat = seq * ci;
                let dense_w = params.add(
                    "dense.w",
                    Tensor::uniform(&[flat, spec.dense_width], fan_in_bound(flat), &mut rng),
                );
                let dense_b = params.add("dense.b", Tensor::zeros(&[spec.dense_width]));
                add_unit(&mut params, &mut dropout_units, "dense", dense_w, flat);
                (
                    ArchPlan::Cnn {
                        blocks,
                        dense_w,
                        dense_b,
                    },
                    spec.dense_width,
                )
            }
            Arch::Lstm => {
                let hid = spec.lstm_hidden;
                let gate = ["i", "f", "g", "o"];
                let mut wx = [0; 4];
                let mut wh = [0; 4];
                let mut bias = [0; 4];
                for k in 0..4 {
                    wx[k] = params.add(
                        &alloc::format!("lstm.wx_{}", gate[k]),
                        Tensor::uniform(&[in_channels, hid], fan_in_bound(in_channels), &mut rng),
                    );
                }
                for k in 0..4 {
                    wh[k] = params.add(
                        &alloc::format!("lstm.wh_{}", gate[k]),
                        Tensor::uniform(&[hid, hid], fan_in_bound(hid), &mut rng),
                    );
                }
                for k in 0..4 {
                    // Forget-gate bias starts at 1 so early cell state persists.
                    let init = if k == 1 { 1.0 } else { 0.0 };
                    bias[k] = params.add(
                        &alloc::format!("lstm.b_{}", gate[k]),
                        Tensor::filled(&[hid], init),
                    );
                }
                // The eight matrices share one layer-level probability but
                // mask independently.
                let shared_logit = learnable_p
                    .then(|| params.add("lstm.p_logit", Tensor::scalar(init_logit)));
                if has_dropout {
                    for k in 0..4 {
                        dropout_units.push(DropoutUnit {
                            weight: wx[k],
                            fan_in: in_channels,
                            p_logit: shared_logit,
                        });
                    }
                    for k in 0..4 {
                        dropout_units.push(DropoutUnit {
                            weight: wh[k],
                            fan_in: hid,
                            p_logit: shared_logit,
                        });
                    }
                }
                (ArchPlan::Lstm(LstmPlan { wx, wh, bias }), hid)
            }
        };

        let mean_w = params.add(
            "head.mean_w",
            Tensor::uniform(&[head_in, 1], fan_in_bound(head_in), &mut rng),
        );
        let mean_b = params.add("head.mean_b", Tensor::zeros(&[1]));
        add_unit(&mut params, &mut dropout_units, "head.mean", mean_w, head_in);
        let (log_var_w, log_var_b) = if spec.heteroscedastic {
            let w = params.add(
                "head.log_var_w",
                Tensor::uniform(&[head_in, 1], fan_in_bound(head_in), &mut rng),
            );
            let b = params.add("head.log_var_b", Tensor::zeros(&[1]));
            add_unit(&mut params, &mut dropout_units, "head.log_var", w, head_in);
            (Some(w), Some(b))
        } else {
            (None, None)
        };

        Ok(Model {
            spec,
            layout,
            params,
            embeddings,
            plan,
            head: HeadPlan {
                mean_w,
                mean_b,
                log_var_w,
                log_var_b,
            },
            dropout_units,
        })
    }

    /// Current drop probability of every dropout layer, by weight name.
    pub fn dropout_probabilities(&self) -> Vec<(String, f64)> {
        self.dropout_units
            .iter()
            .map(|u| {
                let name = self.params.entries[u.weight].name.clone();
                let p = match (self.spec.dropout, u.p_logit) {
                    (DropoutMode::Fixed(p), _) => p,
                    (DropoutMode::Concrete, Some(id)) => {
                        dropout_probability(self.params.value(id).item())
                    }
                    _ => 0.0,
                };
                (name, p)
            })
            .collect()
    }

    /// Bind a forward pass over `batch` into `g`.
    ///
    /// `stochastic` turns weight dropout on (training and Monte-Carlo
    /// passes); deterministic passes apply no masks and need no RNG.
    pub fn bind_forward(
        &self,
        g: &mut Graph,
        batch: &WindowBatch,
        stochastic: bool,
        mut rng: Option<&mut Rng>,
    ) -> Result<BoundModel, LayerError> {
        let param_nodes: Vec<NodeId> = self
            .params
            .entries
            .iter()
            .map(|p| g.leaf(p.value.clone()))
            .collect();

        // Masked views of the dropout-bearing weights, plus regularizer info.
        let mut masked: alloc::collections::BTreeMap<ParamId, NodeId> =
            alloc::collections::BTreeMap::new();
        let mut reg_layers = Vec::with_capacity(self.dropout_units.len());
        for unit in &self.dropout_units {
            let w = param_nodes[unit.weight];
            let p_ref = match (self.spec.dropout, unit.p_logit) {
                (DropoutMode::Fixed(p), _) => ProbRef::Fixed(p),
                (DropoutMode::Concrete, Some(id)) => ProbRef::Logit(param_nodes[id]),
                _ => ProbRef::Fixed(0.0),
            };
            reg_layers.push(RegLayer {
                weight: w,
                fan_in: unit.fan_in,
                p: p_ref,
            });
            if !stochastic {
                continue;
            }
            let w_masked = match self.spec.dropout {
                DropoutMode::None => w,
                DropoutMode::Fixed(p) => {
                    if p == 0.0 {
                        w
                    } else {
                        let rng = rng.as_deref_mut().expect("rng required for stochastic pass");
                        let mask =
                            g.constant(bernoulli_mask(self.params.value(unit.weight).shape(), p, rng));
                        g.mul(w, mask)?
                    }
                }
                DropoutMode::Concrete => {
                    let p_logit = param_nodes[unit.p_logit.expect("concrete unit has logit")];
                    let rng = rng.as_deref_mut().expect("rng required for stochastic pass");
                    concrete_dropout(g, w, p_logit, self.spec.temperature, rng)?.out
                }
            };
            masked.insert(unit.weight, w_masked);
        }
        let view = |id: ParamId| -> NodeId { masked.get(&id).copied().unwrap_or(param_nodes[id]) };

        let tables: Vec<NodeId> = self.embeddings.iter().map(|&id| view(id)).collect();
        let x = embed_and_stack(g, batch, &tables)?;

        let features = match &self.plan {
            ArchPlan::Cnn {
                blocks,
                dense_w,
                dense_b,
            } => {
                let mut h = x;
                for b in blocks {
                    h = super::conv1d_block(g, h, view(b.kernel), param_nodes[b.bias])?;
                }
                let sh = g.value(h).shape().to_vec();
                let flat = g.reshape(h, &[sh[0], sh[1] * sh[2]])?;
                let d = g.matmul(flat, view(*dense_w))?;
                let d = g.add_bias(d, param_nodes[*dense_b])?;
                g.relu(d)
            }
            ArchPlan::Lstm(plan) => {
                let lstm_params = LstmParamNodes {
                    wx: plan.wx.map(|id| param_nodes[id]),
                    wh: plan.wh.map(|id| param_nodes[id]),
                    bias: plan.bias.map(|id| param_nodes[id]),
                };
                // Variational masks: one sample per forward pass, shared by
                // every timestep. `view` already holds the masked weights.
                let masks = LstmMasks::default();
                let masked_params = LstmParamNodes {
                    wx: plan.wx.map(view),
                    wh: plan.wh.map(view),
                    bias: plan.bias.map(|id| param_nodes[id]),
                };
                let _ = lstm_params;
                let hid = self.spec.lstm_hidden;
                let mut h = g.constant(Tensor::zeros(&[batch.batch, hid]));
                let mut c = g.constant(Tensor::zeros(&[batch.batch, hid]));
                for t in 0..batch.sequence_length {
                    let x_t = g.slice_time(x, t)?;
                    let (h2, c2) =
                        lstm_cell_variational(g, x_t, h, c, &masked_params, &masks)?;
                    h = h2;
                    c = c2;
                }
                h
            }
        };

        let head = HeadNodes {
            mean_w: view(self.head.mean_w),
            mean_b: param_nodes[self.head.mean_b],
            log_var_w: self.head.log_var_w.map(view),
            log_var_b: self.head.log_var_b.map(|id| param_nodes[id]),
        };
        let out = hetero_head(g, features, &head)?;
        Ok(BoundModel {
            out: ForwardOut {
                mean: out.mean,
                log_var: out.log_var,
            },
            param_nodes,
            reg_layers,
        })
    }
}

fn fan_in_bound(fan_in: usize) -> f64 {
    crate::fmath::sqrt(1.0 / fan_in.max(1) as f64)
}
