//! Dual-loss training: pixel cross-entropy from the backbone head plus node
//! cross-entropy from the GCN head, Adam with decoupled weight decay, and
//! the two-phase schedule (GCN-only warmup, then joint training).

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Tape, VarId};
use crate::backbone::{self, BackboneConfig};
use crate::data::{LabelMap, Sample, IGNORE};
use crate::error::{Error, Result};
use crate::gcn::{self, GcnConfig};
use crate::graph;
use crate::metrics::{ConfusionMatrix, Metrics};
use crate::params::{ModelParams, TapeBindings};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

/// Model-side configuration: backbone geometry plus graph and GCN settings.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub backbone: BackboneConfig,
    pub hidden_dim: usize,
    /// Neighbor count for the grid adjacency.
    pub l: usize,
    pub sigma: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            backbone: BackboneConfig::default(),
            hidden_dim: 64,
            l: 4,
            sigma: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn gcn_config(&self) -> GcnConfig {
        GcnConfig {
            in_dim: self.backbone.c1 + self.backbone.c2 + 2,
            hidden_dim: self.hidden_dim,
            num_classes: self.backbone.num_classes,
        }
    }

    /// Reconstructs the model geometry from checkpoint tensor shapes.
    /// Graph settings (l, sigma) are not part of the checkpoint and come
    /// back as defaults.
    pub fn from_params(params: &ModelParams) -> Result<ModelSpec> {
        let missing = |name: &str| Error::Format {
            offset: 0,
            msg: format!("checkpoint lacks tensor {name}"),
        };
        let enc_blocks = params
            .iter()
            .filter(|p| p.name.starts_with("enc") && p.name.ends_with(".kernel"))
            .count();
        if enc_blocks < 2 {
            return Err(missing("enc*.kernel"));
        }
        let enc0 = params.get("enc0.kernel").ok_or_else(|| missing("enc0.kernel"))?;
        let score1 = params.get("score1.kernel").ok_or_else(|| missing("score1.kernel"))?;
        let score2 = params.get("score2.kernel").ok_or_else(|| missing("score2.kernel"))?;
        let theta1 = params.get("gcn.theta1").ok_or_else(|| missing("gcn.theta1"))?;
        Ok(ModelSpec {
            backbone: BackboneConfig {
                in_channels: enc0.shape()[1],
                c1: score1.shape()[1],
                c2: score2.shape()[1],
                node_stride: 1 << (enc_blocks - 1),
                num_classes: score1.shape()[0],
            },
            hidden_dim: theta1.shape()[1],
            ..ModelSpec::default()
        })
    }

    /// Backbone and GCN parameters drawn from one seeded stream.
    pub fn init_params(&self, seed: u64) -> Result<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        backbone::append_params(&self.backbone, &mut rng, &mut params)?;
        gcn::append_params(&self.gcn_config(), &mut rng, &mut params)?;
        Ok(params)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub phase1_iters: usize,
    pub phase1_lr: f64,
    pub phase2_lr: f64,
    pub weight_decay: f64,
    /// Weight of the node loss L2 in L = L1 + lambda * L2.
    pub lambda_node: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_iters: 500,
            phase1_lr: 0.01,
            phase2_lr: 1e-4,
            weight_decay: 1e-4,
            lambda_node: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phase1_lr <= 0.0 || self.phase2_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.lambda_node < 0.0 {
            return Err(Error::Config("lambda_node must be >= 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub iters: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,l1,l2,total\n");
        for r in &self.iters {
            out.push_str(&format!("{},{},{},{}\n", r.iter, r.l1, r.l2, r.total));
        }
        out
    }
}

/// IGNORE pixels become None rows for the cross-entropy.
pub fn pixel_label_rows(labels: &LabelMap) -> Vec<Option<usize>> {
    labels
        .data()
        .iter()
        .map(|&v| if v == IGNORE { None } else { Some(v as usize) })
        .collect()
}

pub struct LossVars {
    pub l1: VarId,
    pub l2: Option<VarId>,
    pub total: VarId,
}

/// L = L1 + lambda * L2 on the tape. `node_logits` of None means the GCN
/// head is detached and the loss is L1 alone.
pub fn total_loss(
    tape: &mut Tape,
    pixel_logits: VarId,
    labels: &LabelMap,
    node_logits: Option<VarId>,
    node_labels: &[Option<usize>],
    lambda_node: f64,
) -> Result<LossVars> {
    let rows = tape.channels_to_rows(pixel_logits)?;
    let l1 = tape.softmax_cross_entropy(rows, &pixel_label_rows(labels))?;
    match node_logits {
        Some(node_logits) => {
            let l2 = tape.softmax_cross_entropy(node_logits, node_labels)?;
            let scaled = tape.scale(l2, lambda_node)?;
            let total = tape.add(l1, scaled)?;
            Ok(LossVars {
                l1,
                l2: Some(l2),
                total,
            })
        }
        None => Ok(LossVars {
            l1,
            l2: None,
            total: l1,
        }),
    }
}

/// Per-grid-size cache of the propagation operator.
#[derive(Default)]
pub struct GraphCache {
    map: HashMap<(usize, usize), SparseMatrix>,
}

impl GraphCache {
    pub fn ahat(&mut self, h: usize, w: usize, l: usize, sigma: f64) -> Result<&SparseMatrix> {
        if !self.map.contains_key(&(h, w)) {
            let adj = graph::build_adjacency(h, w, l, sigma)?;
            let ahat = crate::spectral::renormalized_propagation(&adj)?;
            self.map.insert((h, w), ahat);
        }
        Ok(&self.map[&(h, w)])
    }
}

pub struct SampleForward {
    pub pixel_logits: VarId,
    pub loss: LossVars,
}

/// Full forward pass for one sample: backbone, graph head when attached,
/// and the combined loss.
pub fn forward_sample(
    tape: &mut Tape,
    binds: &TapeBindings,
    sample: &Sample,
    spec: &ModelSpec,
    lambda_node: f64,
    with_gcn: bool,
    cache: &mut GraphCache,
) -> Result<SampleForward> {
    let x = tape.leaf(sample.image.clone());
    let out = backbone::backbone_forward(tape, x, binds, &spec.backbone)?;
    let (node_logits, node_labels) = if with_gcn {
        let ann = tape.node_annotations(out.f1, out.f2_up)?;
        let ahat = cache
            .ahat(out.grid_h, out.grid_w, spec.l, spec.sigma)?
            .clone();
        let logits = gcn::gcn_forward(tape, &ahat, ann, binds, &spec.gcn_config())?;
        let labels = graph::pool_node_labels(&sample.labels, spec.backbone.node_stride)?;
        (Some(logits), labels)
    } else {
        (None, Vec::new())
    };
    let loss = total_loss(
        tape,
        out.pixel_logits,
        &sample.labels,
        node_logits,
        &node_labels,
        lambda_node,
    )?;
    Ok(SampleForward {
        pixel_logits: out.pixel_logits,
        loss,
    })
}

/// One Adam update with decoupled weight decay. `grads` is aligned with the
/// parameter order; `step_index` is 1-based; only parameters accepted by
/// `update` move.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_index: usize,
    update: impl Fn(&str) -> bool,
) {
    let bc1 = 1.0 - beta1.powi(step_index as i32);
    let bc2 = 1.0 - beta2.powi(step_index as i32);
    for (p, g) in params.iter_mut().zip(grads) {
        if !update(&p.name) {
            continue;
        }
        for i in 0..p.value.len() {
            let gv = g.data()[i];
            let theta = &mut p.value.data_mut()[i];
            *theta -= lr * weight_decay * *theta;
            let m = &mut p.m.data_mut()[i];
            *m = beta1 * *m + (1.0 - beta1) * gv;
            let v = &mut p.v.data_mut()[i];
            *v = beta2 * *v + (1.0 - beta2) * gv * gv;
            let mhat = p.m.data()[i] / bc1;
            let vhat = p.v.data()[i] / bc2;
            p.value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Two-phase training over a dataset at batch size 1. Iterations below
/// `phase1_iters` update only the GCN head at `phase1_lr`; the rest update
/// everything at `phase2_lr`. The per-epoch shuffle derives from the seed.
pub fn train(
    dataset: &[Sample],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    with_gcn: bool,
) -> Result<(ModelParams, TrainReport)> {
    train_with(dataset, spec, cfg, with_gcn, |_, _, _| Ok(()))
}

/// [`train`] with a per-epoch observer (checkpoint hooks, test-set metrics).
pub fn train_with(
    dataset: &[Sample],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    with_gcn: bool,
    mut on_epoch: impl FnMut(usize, &ModelParams, &EpochRecord) -> Result<()>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Parameter("training dataset is empty".into()));
    }
    let mut params = spec.init_params(cfg.seed)?;
    let mut report = TrainReport::default();
    let mut cache = GraphCache::default();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let mut global_iter = 0usize;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let (mut s1, mut s2, mut st) = (0.0, 0.0, 0.0);
        for &si in &order {
            let sample = &dataset[si];
            let phase1 = global_iter < cfg.phase1_iters;
            let mut tape = Tape::new();
            let binds = TapeBindings::bind(&mut tape, &params);
            let fwd = forward_sample(
                &mut tape,
                &binds,
                sample,
                spec,
                cfg.lambda_node,
                with_gcn,
                &mut cache,
            )?;
            let l1 = tape.value(fwd.loss.l1).item();
            let l2 = fwd.loss.l2.map_or(0.0, |id| tape.value(id).item());
            let total = tape.value(fwd.loss.total).item();
            if !total.is_finite() {
                return Err(Error::TrainingAborted {
                    iter: global_iter,
                    msg: format!("non-finite loss (l1={l1}, l2={l2}) on sample {}", sample.id),
                });
            }
            tape.backward(fwd.loss.total)?;
            let grads: Vec<Tensor> = params
                .iter()
                .map(|p| tape.grad(binds.id(&p.name)).clone())
                .collect();
            let lr = if phase1 { cfg.phase1_lr } else { cfg.phase2_lr };
            step += 1;
            adam_step(
                &mut params,
                &grads,
                lr,
                cfg.weight_decay,
                cfg.beta1,
                cfg.beta2,
                cfg.eps,
                step,
                |name| if phase1 { name.starts_with("gcn.") } else { true },
            );
            report.iters.push(IterRecord {
                iter: global_iter,
                l1,
                l2,
                total,
            });
            s1 += l1;
            s2 += l2;
            st += total;
            global_iter += 1;
        }
        let n = order.len() as f64;
        let record = EpochRecord {
            epoch,
            mean_l1: s1 / n,
            mean_l2: s2 / n,
            mean_total: st / n,
        };
        on_epoch(epoch, &params, &record)?;
        report.epochs.push(record);
    }
    Ok((params, report))
}

/// Inference: backbone pixel logits only, argmax per pixel. Node logits
/// never influence predictions.
pub fn predict_labels(params: &ModelParams, spec: &ModelSpec, image: &Tensor) -> Result<LabelMap> {
    let mut tape = Tape::new();
    let binds = TapeBindings::bind(&mut tape, params);
    let x = tape.leaf(image.clone());
    let out = backbone::backbone_forward(&mut tape, x, &binds, &spec.backbone)?;
    let logits = tape.value(out.pixel_logits);
    let (ncl, h, w) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    let mut labels = LabelMap::filled(h, w, 0);
    for i in 0..h {
        for j in 0..w {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u8;
            for c in 0..ncl {
                let v = logits.at3(c, i, j);
                if v > best {
                    best = v;
                    arg = c as u8;
                }
            }
            labels.set(i, j, arg);
        }
    }
    Ok(labels)
}

/// Confusion matrix and metrics over a sample set; images fan out over the
/// rayon pool.
pub fn evaluate(
    params: &ModelParams,
    spec: &ModelSpec,
    samples: &[Sample],
) -> Result<(ConfusionMatrix, Metrics)> {
    let ncl = spec.backbone.num_classes;
    let cm = samples
        .par_iter()
        .map(|s| -> Result<ConfusionMatrix> {
            let pred = predict_labels(params, spec, &s.image)?;
            let mut cm = ConfusionMatrix::new(ncl);
            cm.accumulate(&pred, &s.labels)?;
            Ok(cm)
        })
        .try_reduce(
            || ConfusionMatrix::new(ncl),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )?;
    let metrics = cm.metrics()?;
    Ok((cm, metrics))
}

/// Loss value and flattened analytic gradients of the full Graph-FCN loss on
/// one sample; drives the finite-difference gradient check.
pub fn loss_and_gradients(
    params: &ModelParams,
    spec: &ModelSpec,
    sample: &Sample,
    lambda_node: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut cache = GraphCache::default();
    let mut tape = Tape::new();
    let binds = TapeBindings::bind(&mut tape, params);
    let fwd = forward_sample(&mut tape, &binds, sample, spec, lambda_node, true, &mut cache)?;
    let value = tape.value(fwd.loss.total).item();
    tape.backward(fwd.loss.total)?;
    let mut grads = Vec::with_capacity(params.num_values());
    for p in params.iter() {
        grads.extend_from_slice(tape.grad(binds.id(&p.name)).data());
    }
    Ok((value, grads))
}

/// Forward-only loss evaluation at a flat parameter vector; the closure the
/// finite-difference oracle perturbs.
pub fn loss_at(
    flat: &[f64],
    template: &ModelParams,
    spec: &ModelSpec,
    sample: &Sample,
    lambda_node: f64,
) -> f64 {
    let mut params = template.clone();
    params.unflatten(flat);
    let mut cache = GraphCache::default();
    let mut tape = Tape::new();
    let binds = TapeBindings::bind(&mut tape, &params);
    let fwd = forward_sample(&mut tape, &binds, sample, spec, lambda_node, true, &mut cache)
        .expect("forward at perturbed parameters");
    tape.value(fwd.loss.total).item()
}
