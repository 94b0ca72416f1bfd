//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records primitive operations as they are built (values are
//! computed eagerly), then [`Graph::backward`] sweeps the tape in reverse to
//! accumulate gradients. The op set is deliberately small: exactly what the
//! layers and losses in this crate need.
//!
//! Gradients accumulate: a tensor used twice receives the sum of both
//! contributions, and repeated `backward` calls keep adding into leaf
//! gradients until [`Graph::zero_grads`] is called. Leaves that do not
//! participate in the output get an all-zero gradient.

use alloc::string::String;
use alloc::vec::Vec;

use crate::fmath;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: index {index} out of range for dimension {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
    #[error("{op}: expected scalar operand, got shape {shape:?}")]
    NonScalarOperand { op: &'static str, shape: Vec<usize> },
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `a * x + b` elementwise; only the slope matters to the gradient.
    Affine { x: NodeId, a: f64 },
    Recip(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul(NodeId, NodeId),
    /// Broadcast add of a `[n]` bias over the last dimension.
    AddBias { x: NodeId, bias: NodeId },
    /// Broadcast multiply by a `[1]` scalar node.
    ScalarMul { x: NodeId, s: NodeId },
    /// Broadcast add of a `[1]` scalar node.
    ScalarAdd { x: NodeId, s: NodeId },
    /// Valid 1-D cross-correlation: `[b, s, ci] * [w, ci, co] -> [b, s-w+1, co]`.
    Conv1d { x: NodeId, kernel: NodeId },
    /// Row lookup `[v, d][indices] -> [rows, d]`; index 0 yields a zero row
    /// (and receives no gradient) when `zero_index_padding` is set.
    GatherRows {
        table: NodeId,
        indices: Vec<usize>,
        zero_index_padding: bool,
    },
    /// Column-wise concatenation of 2-D nodes with equal row counts.
    ConcatCols(Vec<NodeId>),
    /// `[b, s, c]` at timestep `t` -> `[b, c]`.
    SliceTime { x: NodeId, t: usize },
    Reshape(NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Vec<f64>>,
}

/// Tape of primitive operations with eagerly computed values.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf: participates in `backward` and always receives a
    /// gradient buffer (zero if unused).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: true }, value)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: false }, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient buffer of a node after `backward` (same layout as its value).
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), GraphError> {
        if self.shape(a) != self.shape(b) {
            return Err(GraphError::ShapeMismatch {
                op,
                detail: alloc::format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    fn zip_map(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId, GraphError> {
        self.same_shape(op, a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let value = Tensor::new(&shape, data).expect("zip_map shape");
        Ok(self.push(make(a, b), value))
    }

    fn map(
        &mut self,
        x: NodeId,
        f: impl Fn(f64) -> f64,
        make: impl Fn(NodeId) -> Op,
    ) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let value = Tensor::new(&shape, data).expect("map shape");
        self.push(make(x), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.zip_map("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.zip_map("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.zip_map("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Elementwise `a * x + b` with constants.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        self.map(x, |v| a * v + b, |x| Op::Affine { x, a })
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| 1.0 / v, Op::Recip)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.map(x, fmath::exp, Op::Exp)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.map(x, fmath::ln, Op::Ln)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, fmath::sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, fmath::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                detail: alloc::format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = alloc::vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bj) in orow.iter_mut().zip(brow) {
                    *o += x * bj;
                }
            }
        }
        let value = Tensor::new(&[m, n], out).expect("matmul shape");
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// Add a `[n]` bias over the last dimension of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, GraphError> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias);
        let n = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != n {
            return Err(GraphError::ShapeMismatch {
                op: "add_bias",
                detail: alloc::format!("x {sx:?} bias {sb:?}"),
            });
        }
        let xv = self.nodes[x.0].value.data();
        let bv = self.nodes[bias.0].value.data();
        let data: Vec<f64> = xv
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % n])
            .collect();
        let value = Tensor::new(&sx, data).expect("add_bias shape");
        Ok(self.push(Op::AddBias { x, bias }, value))
    }

    fn expect_scalar(&self, op: &'static str, s: NodeId) -> Result<(), GraphError> {
        if self.nodes[s.0].value.numel() != 1 {
            return Err(GraphError::NonScalarOperand {
                op,
                shape: self.shape(s).to_vec(),
            });
        }
        Ok(())
    }

    /// Multiply every element of `x` by the `[1]` node `s`.
    pub fn scalar_mul(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, GraphError> {
        self.expect_scalar("scalar_mul", s)?;
        let sv = self.nodes[s.0].value.item();
        Ok(self.map(x, |v| v * sv, |x| Op::ScalarMul { x, s }))
    }

    /// Add the `[1]` node `s` to every element of `x`.
    pub fn scalar_add(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, GraphError> {
        self.expect_scalar("scalar_add", s)?;
        let sv = self.nodes[s.0].value.item();
        Ok(self.map(x, |v| v + sv, |x| Op::ScalarAdd { x, s }))
    }

    /// Valid (no padding) 1-D cross-correlation.
    pub fn conv1d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId, GraphError> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernel).to_vec();
        if sx.len() != 3 || sk.len() != 3 || sx[2] != sk[1] {
            return Err(GraphError::ShapeMismatch {
                op: "conv1d",
                detail: alloc::format!("input {sx:?} kernel {sk:?}"),
            });
        }
        let (b, s, ci) = (sx[0], sx[1], sx[2]);
        let (w, _, co) = (sk[0], sk[1], sk[2]);
        if w > s {
            return Err(GraphError::ShapeMismatch {
                op: "conv1d",
                detail: alloc::format!("kernel width {w} exceeds sequence length {s}"),
            });
        }
        let so = s - w + 1;
        let xv = self.nodes[x.0].value.data();
        let kv = self.nodes[kernel.0].value.data();
        let mut out = alloc::vec![0.0; b * so * co];
        for bi in 0..b {
            for t in 0..so {
                let orow = &mut out[(bi * so + t) * co..(bi * so + t + 1) * co];
                for dw in 0..w {
                    let xrow = &xv[(bi * s + t + dw) * ci..(bi * s + t + dw + 1) * ci];
                    for (i, &xi) in xrow.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        let krow = &kv[(dw * ci + i) * co..(dw * ci + i + 1) * co];
                        for (o, &kj) in orow.iter_mut().zip(krow) {
                            *o += xi * kj;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(&[b, so, co], out).expect("conv1d shape");
        Ok(self.push(Op::Conv1d { x, kernel }, value))
    }

    /// Look up rows of a `[v, d]` table. With `zero_index_padding`, index 0
    /// produces a zero row and never receives gradient.
    pub fn gather_rows(
        &mut self,
        table: NodeId,
        indices: &[usize],
        zero_index_padding: bool,
    ) -> Result<NodeId, GraphError> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(GraphError::ShapeMismatch {
                op: "gather_rows",
                detail: alloc::format!("table must be 2-D, got {st:?}"),
            });
        }
        let (v, d) = (st[0], st[1]);
        let tv = self.nodes[table.0].value.data();
        let mut out = alloc::vec![0.0; indices.len() * d];
        for (j, &idx) in indices.iter().enumerate() {
            if idx >= v {
                return Err(GraphError::IndexOutOfRange {
                    op: "gather_rows",
                    index: idx,
                    bound: v,
                });
            }
            if zero_index_padding && idx == 0 {
                continue;
            }
            out[j * d..(j + 1) * d].copy_from_slice(&tv[idx * d..(idx + 1) * d]);
        }
        let value = Tensor::new(&[indices.len(), d], out).expect("gather shape");
        Ok(self.push(
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
                zero_index_padding,
            },
            value,
        ))
    }

    /// Concatenate 2-D nodes along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        if parts.is_empty() {
            return Err(GraphError::ShapeMismatch {
                op: "concat_cols",
                detail: String::from("no inputs"),
            });
        }
        let rows = self.shape(parts[0]).first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != 2 || sp[0] != rows {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_cols",
                    detail: alloc::format!("expected [{rows}, _], got {sp:?}"),
                });
            }
            widths.push(sp[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = alloc::vec![0.0; rows * total];
        let mut col = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.nodes[p.0].value.data();
            for r in 0..rows {
                out[r * total + col..r * total + col + w]
                    .copy_from_slice(&pv[r * w..(r + 1) * w]);
            }
            col += w;
        }
        let value = Tensor::new(&[rows, total], out).expect("concat shape");
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// Timestep `t` of a `[b, s, c]` node as `[b, c]`.
    pub fn slice_time(&mut self, x: NodeId, t: usize) -> Result<NodeId, GraphError> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(GraphError::ShapeMismatch {
                op: "slice_time",
                detail: alloc::format!("expected 3-D input, got {sx:?}"),
            });
        }
        let (b, s, c) = (sx[0], sx[1], sx[2]);
        if t >= s {
            return Err(GraphError::IndexOutOfRange {
                op: "slice_time",
                index: t,
                bound: s,
            });
        }
        let xv = self.nodes[x.0].value.data();
        let mut out = alloc::vec![0.0; b * c];
        for bi in 0..b {
            out[bi * c..(bi + 1) * c]
                .copy_from_slice(&xv[(bi * s + t) * c..(bi * s + t + 1) * c]);
        }
        let value = Tensor::new(&[b, c], out).expect("slice shape");
        Ok(self.push(Op::SliceTime { x, t }, value))
    }

    /// Same data, new shape (element counts must agree).
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, GraphError> {
        let n: usize = shape.iter().product();
        if n != self.nodes[x.0].value.numel() {
            return Err(GraphError::ShapeMismatch {
                op: "reshape",
                detail: alloc::format!("{:?} -> {shape:?}", self.shape(x)),
            });
        }
        let value = Tensor::new(shape, self.nodes[x.0].value.data().to_vec())
            .expect("reshape shape");
        Ok(self.push(Op::Reshape(x), value))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(total))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].value.numel() as f64;
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Op::Mean(x), Tensor::scalar(total / n))
    }

    fn grad_buf(&mut self, id: NodeId) -> &mut Vec<f64> {
        let numel = self.nodes[id.0].value.numel();
        self.nodes[id.0]
            .grad
            .get_or_insert_with(|| alloc::vec![0.0; numel])
    }

    /// Reverse sweep from a scalar output. Trainable leaves always end up
    /// with a gradient buffer; intermediate gradients are recomputed from
    /// scratch on every call while leaf gradients accumulate.
    pub fn backward(&mut self, out: NodeId) -> Result<(), GraphError> {
        if self.nodes[out.0].value.numel() != 1 {
            return Err(GraphError::NonScalarBackward {
                shape: self.shape(out).to_vec(),
            });
        }
        // Reset intermediate (non-leaf) gradients; keep leaf accumulation.
        for n in &mut self.nodes {
            if !matches!(n.op, Op::Leaf { .. }) {
                n.grad = None;
            }
        }
        for i in 0..self.nodes.len() {
            if let Op::Leaf { trainable: true } = self.nodes[i].op {
                let _ = self.grad_buf(NodeId(i));
            }
        }
        self.grad_buf(out)[0] += 1.0;

        for i in (0..=out.0).rev() {
            let Some(g) = self.nodes[i].grad.clone() else {
                continue;
            };
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf { .. } => {}
                Op::Add(a, b) => {
                    self.axpy(a, &g, |gi, _| gi);
                    self.axpy(b, &g, |gi, _| gi);
                }
                Op::Sub(a, b) => {
                    self.axpy(a, &g, |gi, _| gi);
                    self.axpy(b, &g, |gi, _| -gi);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.data().to_vec();
                    let bv = self.nodes[b.0].value.data().to_vec();
                    self.axpy_idx(a, &g, |gi, j| gi * bv[j]);
                    self.axpy_idx(b, &g, |gi, j| gi * av[j]);
                }
                Op::Affine { x, a } => {
                    self.axpy(x, &g, |gi, _| a * gi);
                }
                Op::Recip(x) => {
                    let yv = self.nodes[i].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| -gi * yv[j] * yv[j]);
                }
                Op::Exp(x) => {
                    let yv = self.nodes[i].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| gi * yv[j]);
                }
                Op::Ln(x) => {
                    let xv = self.nodes[x.0].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| gi / xv[j]);
                }
                Op::Sigmoid(x) => {
                    let yv = self.nodes[i].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| gi * yv[j] * (1.0 - yv[j]));
                }
                Op::Tanh(x) => {
                    let yv = self.nodes[i].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| gi * (1.0 - yv[j] * yv[j]));
                }
                Op::Relu(x) => {
                    let xv = self.nodes[x.0].value.data().to_vec();
                    self.axpy_idx(x, &g, |gi, j| if xv[j] > 0.0 { gi } else { 0.0 });
                }
                Op::MatMul(a, b) => {
                    let sa = self.shape(a).to_vec();
                    let sb = self.shape(b).to_vec();
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let av = self.nodes[a.0].value.data().to_vec();
                    let bv = self.nodes[b.0].value.data().to_vec();
                    {
                        let ga = self.grad_buf(a);
                        for i2 in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[i2 * n + j] * bv[p * n + j];
                                }
                                ga[i2 * k + p] += acc;
                            }
                        }
                    }
                    {
                        let gb = self.grad_buf(b);
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for i2 in 0..m {
                                    acc += av[i2 * k + p] * g[i2 * n + j];
                                }
                                gb[p * n + j] += acc;
                            }
                        }
                    }
                }
                Op::AddBias { x, bias } => {
                    let n = self.shape(bias)[0];
                    self.axpy(x, &g, |gi, _| gi);
                    let gb = self.grad_buf(bias);
                    for (j, &gi) in g.iter().enumerate() {
                        gb[j % n] += gi;
                    }
                }
                Op::ScalarMul { x, s } => {
                    let sv = self.nodes[s.0].value.item();
                    let xv = self.nodes[x.0].value.data().to_vec();
                    self.axpy(x, &g, |gi, _| gi * sv);
                    let acc: f64 = g.iter().zip(&xv).map(|(&gi, &xi)| gi * xi).sum();
                    self.grad_buf(s)[0] += acc;
                }
                Op::ScalarAdd { x, s } => {
                    self.axpy(x, &g, |gi, _| gi);
                    let acc: f64 = g.iter().sum();
                    self.grad_buf(s)[0] += acc;
                }
                Op::Conv1d { x, kernel } => {
                    let sx = self.shape(x).to_vec();
                    let sk = self.shape(kernel).to_vec();
                    let (b, s, ci) = (sx[0], sx[1], sx[2]);
                    let (w, co) = (sk[0], sk[2]);
                    let so = s - w + 1;
                    let xv = self.nodes[x.0].value.data().to_vec();
                    let kv = self.nodes[kernel.0].value.data().to_vec();
                    {
                        let gx = self.grad_buf(x);
                        for bi in 0..b {
                            for t in 0..so {
                                let grow = &g[(bi * so + t) * co..(bi * so + t + 1) * co];
                                for dw in 0..w {
                                    for i2 in 0..ci {
                                        let krow =
                                            &kv[(dw * ci + i2) * co..(dw * ci + i2 + 1) * co];
                                        let mut acc = 0.0;
                                        for (gz, &kz) in grow.iter().zip(krow) {
                                            acc += gz * kz;
                                        }
                                        gx[(bi * s + t + dw) * ci + i2] += acc;
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gk = self.grad_buf(kernel);
                        for bi in 0..b {
                            for t in 0..so {
                                let grow = &g[(bi * so + t) * co..(bi * so + t + 1) * co];
                                for dw in 0..w {
                                    for i2 in 0..ci {
                                        let xi = xv[(bi * s + t + dw) * ci + i2];
                                        if xi == 0.0 {
                                            continue;
                                        }
                                        let krow = &mut gk
                                            [(dw * ci + i2) * co..(dw * ci + i2 + 1) * co];
                                        for (kz, &gz) in krow.iter_mut().zip(grow) {
                                            *kz += xi * gz;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Op::GatherRows {
                    table,
                    indices,
                    zero_index_padding,
                } => {
                    let d = self.shape(table)[1];
                    let gt = self.grad_buf(table);
                    for (j, &idx) in indices.iter().enumerate() {
                        if zero_index_padding && idx == 0 {
                            continue;
                        }
                        for c in 0..d {
                            gt[idx * d + c] += g[j * d + c];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = self.shape(NodeId(i))[0];
                    let total = self.shape(NodeId(i))[1];
                    let mut col = 0;
                    for p in parts {
                        let w = self.shape(p)[1];
                        let gp = self.grad_buf(p);
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + col + c];
                            }
                        }
                        col += w;
                    }
                }
                Op::SliceTime { x, t } => {
                    let sx = self.shape(x).to_vec();
                    let (s, c) = (sx[1], sx[2]);
                    let gx = self.grad_buf(x);
                    for bi in 0..sx[0] {
                        for j in 0..c {
                            gx[(bi * s + t) * c + j] += g[bi * c + j];
                        }
                    }
                }
                Op::Reshape(x) => {
                    self.axpy(x, &g, |gi, _| gi);
                }
                Op::Sum(x) => {
                    let g0 = g[0];
                    let gx = self.grad_buf(x);
                    for v in gx.iter_mut() {
                        *v += g0;
                    }
                }
                Op::Mean(x) => {
                    let n = self.nodes[x.0].value.numel() as f64;
                    let g0 = g[0] / n;
                    let gx = self.grad_buf(x);
                    for v in gx.iter_mut() {
                        *v += g0;
                    }
                }
            }
        }
        Ok(())
    }

    fn axpy(&mut self, target: NodeId, g: &[f64], f: impl Fn(f64, usize) -> f64) {
        self.axpy_idx(target, g, f)
    }

    fn axpy_idx(&mut self, target: NodeId, g: &[f64], f: impl Fn(f64, usize) -> f64) {
        let buf = self.grad_buf(target);
        for (j, &gi) in g.iter().enumerate() {
            buf[j] += f(gi, j);
        }
    }
}

/// Result of comparing analytic gradients against central finite
/// differences for one leaf.
#[derive(Debug, Clone)]
pub struct LeafCheck {
    pub leaf: usize,
    pub max_abs_diff: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub leaves: Vec<LeafCheck>,
    pub max_rel_error: f64,
}

/// Compare the analytic gradient of a scalar-valued graph builder against
/// central finite differences at the given `point`.
///
/// `build` must be a deterministic function of the leaf values (pass any
/// random draws in as captured constants). The relative error per element
/// is `|analytic - numeric| / (max(|analytic|, |numeric|) + atol)`.
pub fn grad_check<F>(
    build: F,
    point: &[Tensor],
    step: f64,
    atol: f64,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, GraphError>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &ids)?;
        if g.value(out).numel() != 1 {
            return Err(GraphError::NonScalarBackward {
                shape: g.value(out).shape().to_vec(),
            });
        }
        Ok(g.value(out).item())
    };

    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &ids)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).expect("trainable leaf grad").to_vec())
        .collect();

    let mut work: Vec<Tensor> = point.to_vec();
    let mut leaves = Vec::with_capacity(point.len());
    let mut max_rel_error: f64 = 0.0;
    for (li, t) in point.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for e in 0..t.numel() {
            let orig = t.data()[e];
            work[li].data_mut()[e] = orig + step;
            let fp = eval(&work)?;
            work[li].data_mut()[e] = orig - step;
            let fm = eval(&work)?;
            work[li].data_mut()[e] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic[li][e];
            let diff = fmath::abs(a - numeric);
            let denom = fmath::abs(a).max(fmath::abs(numeric)) + atol;
            max_abs = max_abs.max(diff);
            max_rel = max_rel.max(diff / denom);
        }
        max_rel_error = max_rel_error.max(max_rel);
        leaves.push(LeafCheck {
            leaf: li,
            max_abs_diff: max_abs,
            max_rel_error: max_rel,
        });
    }
    Ok(GradCheckReport {
        leaves,
        max_rel_error,
    })
}
