//! Mini-batch training with a step-decay learning-rate schedule.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_grad, cross_entropy_grad, multisupcon_grad, supcon_grad};
use super::mlp::{DenseLayer, Gradients, Head, LabelDict, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Single(String),
    Multi(BTreeSet<String>),
}

impl Target {
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Target::Single(l) => vec![l.as_str()],
            Target::Multi(set) => set.iter().map(String::as_str).collect(),
        }
    }
}

/// Feature rows with one single label or one label set each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<(Vec<f64>, Target)>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<(Vec<f64>, Target)>) -> Result<Self> {
        if let Some((first, target)) = rows.first() {
            let width = first.len();
            let multi = matches!(target, Target::Multi(_));
            for (i, (x, t)) in rows.iter().enumerate() {
                if x.len() != width {
                    return Err(Error::Shape {
                        expected: width,
                        got: x.len(),
                    });
                }
                if matches!(t, Target::Multi(_)) != multi {
                    return Err(Error::Contract(format!(
                        "row {i} mixes single-label and multi-label targets"
                    )));
                }
            }
        }
        Ok(LabeledDataset { rows })
    }

    pub fn single(rows: impl IntoIterator<Item = (Vec<f64>, String)>) -> Result<Self> {
        Self::new(rows.into_iter().map(|(x, y)| (x, Target::Single(y))).collect())
    }

    pub fn multi(rows: impl IntoIterator<Item = (Vec<f64>, BTreeSet<String>)>) -> Result<Self> {
        Self::new(rows.into_iter().map(|(x, y)| (x, Target::Multi(y))).collect())
    }

    pub fn rows(&self) -> &[(Vec<f64>, Target)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map(|(x, _)| x.len()).unwrap_or(0)
    }

    pub fn is_multi_label(&self) -> bool {
        matches!(self.rows.first(), Some((_, Target::Multi(_))))
    }

    pub fn label_space(&self) -> BTreeSet<String> {
        self.rows
            .iter()
            .flat_map(|(_, t)| t.labels().into_iter().map(String::from))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Shuffle with `seed` and cut at `train_fraction` (the rest is held out).
    pub fn split(&self, train_fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }

    pub(crate) fn matrix(&self, indices: &[usize]) -> Array2<f64> {
        let width = self.width();
        let mut m = Array2::zeros((indices.len(), width));
        for (r, &i) in indices.iter().enumerate() {
            m.row_mut(r)
                .assign(&ArrayView2::from_shape((1, width), &self.rows[i].0).unwrap().row(0));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Ce,
    Bce,
    JointSupcon,
    JointMultisupcon,
}

impl LossMode {
    pub fn is_multi_label(self) -> bool {
        matches!(self, LossMode::Bce | LossMode::JointMultisupcon)
    }

    pub fn is_contrastive(self) -> bool {
        matches!(self, LossMode::JointSupcon | LossMode::JointMultisupcon)
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Ce => "ce",
            LossMode::Bce => "bce",
            LossMode::JointSupcon => "joint_supcon",
            LossMode::JointMultisupcon => "joint_multisupcon",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossMode::Ce),
            "bce" => Ok(LossMode::Bce),
            "joint_supcon" => Ok(LossMode::JointSupcon),
            "joint_multisupcon" => Ok(LossMode::JointMultisupcon),
            other => Err(Error::Config(format!("unknown loss mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub batch_train: usize,
    pub batch_eval: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub tau: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub hidden: Vec<usize>,
    pub optimizer: Optimizer,
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-3,
            step_size: 20,
            gamma: 0.1,
            batch_train: 256,
            batch_eval: 32,
            seed: 0,
            loss_mode: LossMode::Ce,
            tau: 0.1,
            lambda: 0.1,
            threshold: 0.5,
            hidden: vec![512, 256, 128],
            optimizer: Optimizer::Adam,
            normalize_inputs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if self.batch_train == 0 || self.batch_eval == 0 {
            return bad("batch sizes must be positive".to_string());
        }
        if self.step_size == 0 {
            return bad("step_size must be positive".to_string());
        }
        if self.hidden.is_empty() {
            return bad("at least one hidden layer is required".to_string());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.gamma.powi((epoch / self.step_size) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch (sample-weighted over batches).
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub samples: usize,
}

struct AdamState {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(model: &MlpModel) -> Self {
        let zeros = || {
            model
                .layers()
                .iter()
                .map(|l| DenseLayer::zeros(l.input_dim(), l.output_dim()))
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((layer, g), m), v) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, lr, c1, c2);
            adam_update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, lr, c1, c2);
        }
    }
}

fn adam_update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        });
}

fn sgd_step(model: &mut MlpModel, grads: &Gradients, lr: f64) {
    for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
        layer.weights.scaled_add(-lr, &g.weights);
        layer.bias.scaled_add(-lr, &g.bias);
    }
}

/// Encoded batch targets.
pub(crate) enum BatchTargets {
    Single(Vec<usize>),
    Multi(Vec<BTreeSet<usize>>),
}

/// Loss of one batch under `mode` plus its gradient with respect to all
/// parameters. Shared by training and the finite-difference checks.
pub fn batch_loss_and_gradients(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: &[Target],
    cfg: &TrainConfig,
) -> Result<(f64, Gradients)> {
    let encoded = encode_targets(model.labels(), targets)?;
    batch_objective(model, x, &encoded, cfg)
}

fn encode_targets(labels: &LabelDict, targets: &[Target]) -> Result<BatchTargets> {
    let lookup = |l: &str| {
        labels
            .index_of(l)
            .ok_or_else(|| Error::Contract(format!("label `{l}` is not in the label dictionary")))
    };
    match targets.first() {
        Some(Target::Multi(_)) => targets
            .iter()
            .map(|t| match t {
                Target::Multi(set) => set.iter().map(|l| lookup(l)).collect(),
                Target::Single(_) => Err(Error::Contract("mixed targets".to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(BatchTargets::Multi),
        _ => targets
            .iter()
            .map(|t| match t {
                Target::Single(l) => lookup(l),
                Target::Multi(_) => Err(Error::Contract("mixed targets".to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(BatchTargets::Single),
    }
}

fn batch_objective(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: &BatchTargets,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients)> {
    let cache = model.forward_batch(x)?;
    let logits = cache.logits();
    let n = logits.nrows();
    let mut d_logits = Array2::<f64>::zeros(logits.raw_dim());
    let mut supervised = 0.0;
    for (r, row) in logits.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let (loss, grad) = match targets {
            BatchTargets::Single(ys) => cross_entropy_grad(&row, ys[r]),
            BatchTargets::Multi(sets) => {
                let mask: Vec<bool> = (0..row.len()).map(|j| sets[r].contains(&j)).collect();
                bce_grad(&row, &mask)
            }
        };
        supervised += loss / n as f64;
        for (j, g) in grad.into_iter().enumerate() {
            d_logits[[r, j]] = g / n as f64;
        }
    }
    if !cfg.loss_mode.is_contrastive() {
        let grads = model.backward(&cache, d_logits.view(), None);
        return Ok((supervised, grads));
    }

    // A contrastive term needs at least two samples in the batch.
    let (contrastive, d_emb) = if n >= 2 {
        match targets {
            BatchTargets::Single(ys) => supcon_grad(cache.embeddings().view(), ys, cfg.tau)?,
            BatchTargets::Multi(sets) => {
                multisupcon_grad(cache.embeddings().view(), sets, cfg.tau, cfg.threshold)?
            }
        }
    } else {
        (0.0, Array2::zeros(cache.embeddings().raw_dim()))
    };
    let lambda = cfg.lambda;
    d_logits *= 1.0 - lambda;
    let d_emb = d_emb * lambda;
    let grads = model.backward(&cache, d_logits.view(), Some(d_emb.view()));
    Ok((lambda * contrastive + (1.0 - lambda) * supervised, grads))
}

/// Train a fresh model. Deterministic for a given dataset and config.
pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".to_string()));
    }
    if ds.is_multi_label() != cfg.loss_mode.is_multi_label() {
        return Err(Error::Config(format!(
            "loss mode `{}` does not fit {} targets",
            cfg.loss_mode,
            if ds.is_multi_label() { "multi-label" } else { "single-label" }
        )));
    }
    let labels = LabelDict::new(ds.label_space());
    let head = if ds.is_multi_label() {
        Head::Sigmoid
    } else {
        Head::Softmax
    };
    let mut dims = vec![ds.width()];
    dims.extend(&cfg.hidden);
    dims.push(labels.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::new(&dims, head, labels, &mut rng)?;
    model.normalize_inputs = cfg.normalize_inputs;
    if cfg.loss_mode.is_contrastive() {
        model.embed_dim = Some(dims[dims.len() - 2]);
    }

    let targets: Vec<Target> = ds.rows().iter().map(|(_, t)| t.clone()).collect();
    let mut adam = AdamState::new(&model);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        learning_rates: Vec::with_capacity(cfg.epochs),
        samples: ds.len(),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_train).enumerate() {
            let x = ds.matrix(batch);
            let batch_targets: Vec<Target> = batch.iter().map(|&i| targets[i].clone()).collect();
            let encoded = encode_targets(model.labels(), &batch_targets)?;
            let (loss, grads) = batch_objective(&model, x.view(), &encoded, cfg)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            total += loss * batch.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut model, &grads, lr),
                Optimizer::Sgd => sgd_step(&mut model, &grads, lr),
            }
        }
        report.epoch_losses.push(total / ds.len() as f64);
        report.learning_rates.push(lr);
    }
    Ok((model, report))
}

/// Logits for every row, computed in chunks of `batch` rows.
pub(crate) fn batched_probabilities(
    model: &MlpModel,
    ds: &LabeledDataset,
    batch: usize,
) -> Result<Vec<Vec<f64>>> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for chunk in indices.chunks(batch.max(1)) {
        let cache = model.forward_batch(ds.matrix(chunk).view())?;
        for row in cache.logits().axis_iter(Axis(0)) {
            out.push(model.probabilities(&row.to_vec()));
        }
    }
    Ok(out)
}
