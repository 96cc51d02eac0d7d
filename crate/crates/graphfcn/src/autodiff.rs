//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records one forward pass. Leaves are created from plain
//! tensors, every op appends a node, and [`Tape::backward`] walks the tape
//! in reverse accumulating gradients. One tape serves one training step;
//! parameters live outside the tape as plain tensors and are re-inserted as
//! leaves each step.

use crate::error::{Error, Result};
use crate::graph;
use crate::sparse::SparseMatrix;
use crate::tensor::{self, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Op {
    Leaf,
    Add(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    Sum(VarId),
    Relu(VarId),
    Matmul(VarId, VarId),
    SparseMatmul {
        s: SparseMatrix,
        x: VarId,
    },
    Conv2d {
        x: VarId,
        k: VarId,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        x: VarId,
        argmax: Vec<usize>,
    },
    Upsample {
        x: VarId,
        factor: usize,
    },
    PadSpatial(VarId),
    CropSpatial(VarId),
    ChannelsToRows(VarId),
    AddChannelBias {
        x: VarId,
        b: VarId,
    },
    SoftmaxCe {
        logits: VarId,
        labels: Vec<Option<usize>>,
        probs: Tensor,
        count: usize,
    },
    NodeAnnotations {
        f1: VarId,
        f2: VarId,
    },
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Records a single forward pass and supports one backward sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push_unchecked(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<VarId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        Ok(self.push_unchecked(value, op))
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op) -> VarId {
        let grad = Tensor::zeros(value.shape().to_vec());
        self.nodes.push(Node { value, grad, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut out = va.clone();
        for (o, x) in out.data_mut().iter_mut().zip(vb.data()) {
            *o += x;
        }
        self.push("add", out, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut out = va.clone();
        for (o, x) in out.data_mut().iter_mut().zip(vb.data()) {
            *o *= x;
        }
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId> {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            *o *= c;
        }
        self.push("scale", out, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: VarId) -> Result<VarId> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId> {
        let mut out = self.value(x).clone();
        for o in out.data_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
        self.push("relu", out, Op::Relu(x))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push("matmul", out, Op::Matmul(a, b))
    }

    pub fn sparse_dense_matmul(&mut self, s: &SparseMatrix, x: VarId) -> Result<VarId> {
        let out = s.mul_dense(self.value(x))?;
        self.push("sparse_dense_matmul", out, Op::SparseMatmul { s: s.clone(), x })
    }

    /// 2-d cross-correlation with zero padding; x is [C_in, H, W], k is
    /// [C_out, C_in, kh, kw].
    pub fn conv2d(&mut self, x: VarId, k: VarId, stride: usize, pad: usize) -> Result<VarId> {
        let (vx, vk) = (self.value(x), self.value(k));
        if vx.shape().len() != 3 || vk.shape().len() != 4 || vx.shape()[0] != vk.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: vx.shape().to_vec(),
                rhs: vk.shape().to_vec(),
            });
        }
        let (cin, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (cout, kh, kw) = (vk.shape()[0], vk.shape()[2], vk.shape()[3]);
        if kh > h + 2 * pad || kw > w + 2 * pad || stride == 0 {
            return Err(Error::Parameter(format!(
                "conv2d kernel {kh}x{kw} too large for padded input {}x{} (stride {stride})",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(vec![cout, oh, ow]);
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for p in 0..kh {
                            let y = (i * stride + p) as isize - pad as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for q in 0..kw {
                                let xx = (j * stride + q) as isize - pad as isize;
                                if xx < 0 || xx >= w as isize {
                                    continue;
                                }
                                acc += vx.at3(c, y as usize, xx as usize)
                                    * vk.data()[((o * cin + c) * kh + p) * kw + q];
                            }
                        }
                    }
                    let idx = out.idx3(o, i, j);
                    out.data_mut()[idx] = acc;
                }
            }
        }
        self.push("conv2d", out, Op::Conv2d { x, k, stride, pad })
    }

    /// Per-window maximum; ties route gradient to the first position in scan
    /// order.
    pub fn maxpool2d(&mut self, x: VarId, size: usize, stride: usize) -> Result<VarId> {
        let vx = self.value(x);
        if vx.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "maxpool2d",
                lhs: vx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if size == 0 || stride == 0 || size > h || size > w {
            return Err(Error::Parameter(format!(
                "maxpool2d window {size} stride {stride} invalid for {h}x{w}"
            )));
        }
        let oh = (h - size) / stride + 1;
        let ow = (w - size) / stride + 1;
        let mut out = Tensor::zeros(vec![c, oh, ow]);
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for p in 0..size {
                        for q in 0..size {
                            let idx = vx.idx3(ch, i * stride + p, j * stride + q);
                            if vx.data()[idx] > best {
                                best = vx.data()[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oidx = out.idx3(ch, i, j);
                    out.data_mut()[oidx] = best;
                    argmax[oidx] = best_idx;
                }
            }
        }
        self.push("maxpool2d", out, Op::MaxPool { x, argmax })
    }

    /// Nearest-neighbor upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: VarId, factor: usize) -> Result<VarId> {
        let vx = self.value(x);
        if vx.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "upsample_nearest",
                lhs: vx.shape().to_vec(),
                rhs: vec![],
            });
        }
        if factor == 0 {
            return Err(Error::Parameter("upsample factor must be >= 1".into()));
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let mut out = Tensor::zeros(vec![c, h * factor, w * factor]);
        for ch in 0..c {
            for i in 0..h * factor {
                for j in 0..w * factor {
                    let idx = out.idx3(ch, i, j);
                    out.data_mut()[idx] = vx.at3(ch, i / factor, j / factor);
                }
            }
        }
        self.push("upsample_nearest", out, Op::Upsample { x, factor })
    }

    /// Zero-pads the spatial extent at the bottom/right edges.
    pub fn pad_spatial(&mut self, x: VarId, new_h: usize, new_w: usize) -> Result<VarId> {
        let vx = self.value(x);
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if new_h < h || new_w < w {
            return Err(Error::Parameter(format!(
                "pad_spatial target {new_h}x{new_w} smaller than input {h}x{w}"
            )));
        }
        let mut out = Tensor::zeros(vec![c, new_h, new_w]);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let idx = out.idx3(ch, i, j);
                    out.data_mut()[idx] = vx.at3(ch, i, j);
                }
            }
        }
        self.push("pad_spatial", out, Op::PadSpatial(x))
    }

    /// Keeps the top-left h x w corner of the spatial extent.
    pub fn crop_spatial(&mut self, x: VarId, new_h: usize, new_w: usize) -> Result<VarId> {
        let vx = self.value(x);
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if new_h > h || new_w > w {
            return Err(Error::Parameter(format!(
                "crop_spatial target {new_h}x{new_w} larger than input {h}x{w}"
            )));
        }
        let mut out = Tensor::zeros(vec![c, new_h, new_w]);
        for ch in 0..c {
            for i in 0..new_h {
                for j in 0..new_w {
                    let idx = out.idx3(ch, i, j);
                    out.data_mut()[idx] = vx.at3(ch, i, j);
                }
            }
        }
        self.push("crop_spatial", out, Op::CropSpatial(x))
    }

    /// Reorders [C, H, W] into [(H*W), C] so spatial positions become rows.
    pub fn channels_to_rows(&mut self, x: VarId) -> Result<VarId> {
        let vx = self.value(x);
        if vx.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "channels_to_rows",
                lhs: vx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let mut out = Tensor::zeros(vec![h * w, c]);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out.data_mut()[(i * w + j) * c + ch] = vx.at3(ch, i, j);
                }
            }
        }
        self.push("channels_to_rows", out, Op::ChannelsToRows(x))
    }

    /// Adds a per-channel bias b[C] to x[C, H, W].
    pub fn add_channel_bias(&mut self, x: VarId, b: VarId) -> Result<VarId> {
        let (vx, vb) = (self.value(x), self.value(b));
        if vx.shape().len() != 3 || vb.shape().len() != 1 || vb.shape()[0] != vx.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "add_channel_bias",
                lhs: vx.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let mut out = vx.clone();
        for ch in 0..c {
            let bias = vb.data()[ch];
            for i in 0..h {
                for j in 0..w {
                    let idx = out.idx3(ch, i, j);
                    out.data_mut()[idx] += bias;
                }
            }
        }
        self.push("add_channel_bias", out, Op::AddChannelBias { x, b })
    }

    /// Mean cross-entropy over the non-ignored rows of [n, c] logits.
    /// `labels[r] == None` marks an ignored row. Returns 0 when every row is
    /// ignored.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: VarId,
        labels: &[Option<usize>],
    ) -> Result<VarId> {
        let vl = self.value(logits);
        if vl.shape().len() != 2 || vl.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: vl.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let (n, c) = (vl.shape()[0], vl.shape()[1]);
        for (r, l) in labels.iter().enumerate() {
            if let Some(lab) = l {
                if *lab >= c {
                    return Err(Error::LabelOutOfRange {
                        row: r,
                        label: *lab,
                        classes: c,
                    });
                }
            }
        }
        let mut probs = Tensor::zeros(vec![n, c]);
        let mut loss = 0.0;
        let mut count = 0usize;
        for r in 0..n {
            let row = &vl.data()[r * c..(r + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                probs.data_mut()[r * c + j] = e;
                z += e;
            }
            for j in 0..c {
                probs.data_mut()[r * c + j] /= z;
            }
            if let Some(lab) = labels[r] {
                loss += m + z.ln() - row[lab];
                count += 1;
            }
        }
        let value = if count == 0 { 0.0 } else { loss / count as f64 };
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(value),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
                count,
            },
        )
    }

    /// Node annotation matrix of a feature grid: per-node concatenation of
    /// f1 and f2 channel vectors plus normalized grid coordinates.
    pub fn node_annotations(&mut self, f1: VarId, f2: VarId) -> Result<VarId> {
        let out = graph::build_node_annotations(self.value(f1), self.value(f2))?;
        self.push("node_annotations", out, Op::NodeAnnotations { f1, f2 })
    }

    /// Reverse sweep from a scalar loss. Populates every node's grad.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        self.backward_done = true;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Parameter(
                "backward requires a scalar loss".into(),
            ));
        }
        self.nodes[loss.0].grad.data_mut()[0] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if node.grad.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut before[a.0].grad, node.grad.data());
                    accumulate(&mut before[b.0].grad, node.grad.data());
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    let da: Vec<f64> = node
                        .grad
                        .data()
                        .iter()
                        .zip(before[b].value.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    let db: Vec<f64> = node
                        .grad
                        .data()
                        .iter()
                        .zip(before[a].value.data())
                        .map(|(g, v)| g * v)
                        .collect();
                    accumulate(&mut before[a].grad, &da);
                    accumulate(&mut before[b].grad, &db);
                }
                Op::Scale(x, c) => {
                    let dx: Vec<f64> = node.grad.data().iter().map(|g| g * c).collect();
                    accumulate(&mut before[x.0].grad, &dx);
                }
                Op::Sum(x) => {
                    let g = node.grad.data()[0];
                    for v in before[x.0].grad.data_mut() {
                        *v += g;
                    }
                }
                Op::Relu(x) => {
                    let x = x.0;
                    let dx: Vec<f64> = node
                        .grad
                        .data()
                        .iter()
                        .zip(before[x].value.data())
                        .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut before[x].grad, &dx);
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    let g = &node.grad;
                    let (m, n) = (g.shape()[0], g.shape()[1]);
                    let k = before[a].value.shape()[1];
                    // da = g * b^T
                    let bv = &before[b].value;
                    let mut da = vec![0.0; m * k];
                    for i2 in 0..m {
                        for j in 0..n {
                            let gv = g.data()[i2 * n + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da[i2 * k + p] += gv * bv.data()[p * n + j];
                            }
                        }
                    }
                    // db = a^T * g
                    let av = &before[a].value;
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for i2 in 0..m {
                            let avv = av.data()[i2 * k + p];
                            if avv == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += avv * g.data()[i2 * n + j];
                            }
                        }
                    }
                    accumulate(&mut before[a].grad, &da);
                    accumulate(&mut before[b].grad, &db);
                }
                Op::SparseMatmul { s, x } => {
                    let dx = s.transpose().mul_dense(&node.grad).expect("shape ok");
                    accumulate(&mut before[x.0].grad, dx.data());
                }
                Op::Conv2d { x, k, stride, pad } => {
                    let (x, k) = (x.0, k.0);
                    let g = &node.grad;
                    let xv = &before[x].value;
                    let kv = &before[k].value;
                    let (cin, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                    let (cout, kh, kw) = (kv.shape()[0], kv.shape()[2], kv.shape()[3]);
                    let (oh, ow) = (g.shape()[1], g.shape()[2]);
                    let mut dx = vec![0.0; xv.len()];
                    let mut dk = vec![0.0; kv.len()];
                    for o in 0..cout {
                        for i2 in 0..oh {
                            for j in 0..ow {
                                let gv = g.at3(o, i2, j);
                                if gv == 0.0 {
                                    continue;
                                }
                                for c in 0..cin {
                                    for p in 0..kh {
                                        let y = (i2 * stride + p) as isize - *pad as isize;
                                        if y < 0 || y >= h as isize {
                                            continue;
                                        }
                                        for q in 0..kw {
                                            let xx = (j * stride + q) as isize - *pad as isize;
                                            if xx < 0 || xx >= w as isize {
                                                continue;
                                            }
                                            let xi = (c * h + y as usize) * w + xx as usize;
                                            let ki = ((o * cin + c) * kh + p) * kw + q;
                                            dx[xi] += gv * kv.data()[ki];
                                            dk[ki] += gv * xv.data()[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut before[x].grad, &dx);
                    accumulate(&mut before[k].grad, &dk);
                }
                Op::MaxPool { x, argmax } => {
                    let xg = before[x.0].grad.data_mut();
                    for (oidx, &src) in argmax.iter().enumerate() {
                        xg[src] += node.grad.data()[oidx];
                    }
                }
                Op::Upsample { x, factor } => {
                    let g = &node.grad;
                    let (c, oh, ow) = (g.shape()[0], g.shape()[1], g.shape()[2]);
                    let xg = before[x.0].grad.data_mut();
                    let (h, w) = (oh / factor, ow / factor);
                    for ch in 0..c {
                        for i2 in 0..oh {
                            for j in 0..ow {
                                xg[(ch * h + i2 / factor) * w + j / factor] += g.at3(ch, i2, j);
                            }
                        }
                    }
                }
                Op::PadSpatial(x) => {
                    let g = &node.grad;
                    let xg = &mut before[x.0].grad;
                    let (c, h, w) = (xg.shape()[0], xg.shape()[1], xg.shape()[2]);
                    for ch in 0..c {
                        for i2 in 0..h {
                            for j in 0..w {
                                let idx = (ch * h + i2) * w + j;
                                xg.data_mut()[idx] += g.at3(ch, i2, j);
                            }
                        }
                    }
                }
                Op::CropSpatial(x) => {
                    let g = &node.grad;
                    let (c, oh, ow) = (g.shape()[0], g.shape()[1], g.shape()[2]);
                    let xg = &mut before[x.0].grad;
                    let (h, w) = (xg.shape()[1], xg.shape()[2]);
                    debug_assert_eq!(xg.shape()[0], c);
                    for ch in 0..c {
                        for i2 in 0..oh {
                            for j in 0..ow {
                                xg.data_mut()[(ch * h + i2) * w + j] += g.at3(ch, i2, j);
                            }
                        }
                    }
                }
                Op::ChannelsToRows(x) => {
                    let g = &node.grad;
                    let xg = &mut before[x.0].grad;
                    let (c, h, w) = (xg.shape()[0], xg.shape()[1], xg.shape()[2]);
                    for ch in 0..c {
                        for i2 in 0..h {
                            for j in 0..w {
                                xg.data_mut()[(ch * h + i2) * w + j] +=
                                    g.data()[(i2 * w + j) * c + ch];
                            }
                        }
                    }
                }
                Op::AddChannelBias { x, b } => {
                    let g = &node.grad;
                    let (c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2]);
                    accumulate(&mut before[x.0].grad, g.data());
                    let bg = before[b.0].grad.data_mut();
                    for ch in 0..c {
                        for i2 in 0..h {
                            for j in 0..w {
                                bg[ch] += g.at3(ch, i2, j);
                            }
                        }
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    labels,
                    probs,
                    count,
                } => {
                    if *count == 0 {
                        continue;
                    }
                    let g = node.grad.data()[0] / *count as f64;
                    let c = probs.shape()[1];
                    let lg = before[logits.0].grad.data_mut();
                    for (r, lab) in labels.iter().enumerate() {
                        if let Some(lab) = lab {
                            for j in 0..c {
                                let onehot = if j == *lab { 1.0 } else { 0.0 };
                                lg[r * c + j] += g * (probs.data()[r * c + j] - onehot);
                            }
                        }
                    }
                }
                Op::NodeAnnotations { f1, f2 } => {
                    let g = &node.grad;
                    let (f1, f2) = (f1.0, f2.0);
                    let (c1, h, w) = {
                        let s = before[f1].value.shape();
                        (s[0], s[1], s[2])
                    };
                    let c2 = before[f2].value.shape()[0];
                    let s_dim = g.shape()[1];
                    debug_assert_eq!(s_dim, c1 + c2 + 2);
                    for i2 in 0..h {
                        for j in 0..w {
                            let row = i2 * w + j;
                            for c in 0..c1 {
                                before[f1].grad.data_mut()[(c * h + i2) * w + j] +=
                                    g.data()[row * s_dim + c];
                            }
                            for c in 0..c2 {
                                before[f2].grad.data_mut()[(c * h + i2) * w + j] +=
                                    g.data()[row * s_dim + c1 + c];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grad: &mut Tensor, contribution: &[f64]) {
    debug_assert_eq!(grad.len(), contribution.len());
    for (g, c) in grad.data_mut().iter_mut().zip(contribution) {
        *g += c;
    }
}
