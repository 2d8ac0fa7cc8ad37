//! Evaluation metrics and k-fold cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{rank, MlpModel};
use super::train::{batched_probabilities, train, LabeledDataset, Target, TrainConfig};
use crate::error::{Error, Result};

/// Deepest Top@k window reported.
pub const MAX_TOP_K: usize = 3;

/// Scalar scores; every value lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `top_k[k - 1]` is the Top@k hit rate.
    pub top_k: Vec<f64>,
}

impl Scores {
    fn fields(&self) -> Vec<f64> {
        let mut v = vec![self.accuracy, self.precision, self.recall, self.f1];
        v.extend(&self.top_k);
        v
    }

    fn from_fields(v: &[f64]) -> Scores {
        Scores {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            top_k: v[4..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scores: Scores,
    /// Labels indexing the confusion matrix (truth ∪ predictions).
    pub labels: Vec<String>,
    /// `confusion[truth][predicted]`; single-label only.
    pub confusion: Option<Vec<Vec<u64>>>,
    pub samples: usize,
    /// Evaluation rows whose label the model never saw.
    pub unseen: usize,
}

#[derive(Debug, Default)]
struct LabelCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

fn macro_scores(counts: &BTreeMap<String, LabelCounts>) -> (f64, f64, f64) {
    if counts.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for c in counts.values() {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        p += precision;
        r += recall;
        f += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    let n = counts.len() as f64;
    (p / n, r / n, f / n)
}

/// Metrics from true targets and per-row label probabilities over `labels`.
pub fn score_predictions(
    labels: &[String],
    truth: &[Target],
    probabilities: &[Vec<f64>],
) -> Result<Metrics> {
    if truth.len() != probabilities.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            got: probabilities.len(),
        });
    }
    let known: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    let unseen = truth
        .iter()
        .filter(|t| t.labels().iter().any(|l| !known.contains(l)))
        .count();
    let multi = matches!(truth.first(), Some(Target::Multi(_)));
    let mut counts: BTreeMap<String, LabelCounts> = BTreeMap::new();
    let mut hits = vec![0usize; MAX_TOP_K];
    let mut correct = 0usize;
    let mut confusion_pairs: Vec<(String, String)> = Vec::new();

    for (target, probs) in truth.iter().zip(probabilities) {
        let order = rank(probs);
        let true_set: BTreeSet<&str> = target.labels().into_iter().collect();
        for (k, hit) in hits.iter_mut().enumerate() {
            if order
                .iter()
                .take(k + 1)
                .any(|&i| true_set.contains(labels[i].as_str()))
            {
                *hit += 1;
            }
        }
        let predicted: BTreeSet<&str> = if multi {
            let mut set: BTreeSet<&str> = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= 0.5)
                .map(|(i, _)| labels[i].as_str())
                .collect();
            if set.is_empty() {
                if let Some(&top) = order.first() {
                    set.insert(labels[top].as_str());
                }
            }
            set
        } else {
            order.first().map(|&i| labels[i].as_str()).into_iter().collect()
        };
        if predicted == true_set {
            correct += 1;
        }
        for &l in true_set.union(&predicted) {
            let c = counts.entry(l.to_string()).or_default();
            match (true_set.contains(l), predicted.contains(l)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => {}
            }
        }
        if !multi {
            if let (Some(t), Some(p)) = (true_set.first(), predicted.first()) {
                confusion_pairs.push((t.to_string(), p.to_string()));
            }
        }
    }

    let n = truth.len();
    let rate = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    let (precision, recall, f1) = macro_scores(&counts);
    let label_space: Vec<String> = counts.keys().cloned().collect();
    let confusion = (!multi).then(|| {
        let index: BTreeMap<&str, usize> = label_space
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut m = vec![vec![0u64; label_space.len()]; label_space.len()];
        for (t, p) in &confusion_pairs {
            m[index[t.as_str()]][index[p.as_str()]] += 1;
        }
        m
    });
    Ok(Metrics {
        scores: Scores {
            accuracy: rate(correct),
            precision,
            recall,
            f1,
            top_k: hits.into_iter().map(rate).collect(),
        },
        labels: label_space,
        confusion,
        samples: n,
        unseen,
    })
}

/// Evaluate with the default evaluation batch size.
pub fn evaluate(model: &MlpModel, ds: &LabeledDataset) -> Result<Metrics> {
    evaluate_batched(model, ds, TrainConfig::default().batch_eval)
}

pub fn evaluate_batched(model: &MlpModel, ds: &LabeledDataset, batch: usize) -> Result<Metrics> {
    let probs = batched_probabilities(model, ds, batch)?;
    let truth: Vec<Target> = ds.rows().iter().map(|(_, t)| t.clone()).collect();
    let metrics = score_predictions(model.labels().labels(), &truth, &probs)?;
    if metrics.unseen > 0 {
        warn!(
            "{} evaluation rows carry labels unseen in training; they receive no credit",
            metrics.unseen
        );
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldReport {
    pub folds: Vec<Metrics>,
    pub mean: Scores,
    /// Sample standard deviation across folds (0 for a single fold).
    pub std: Scores,
}

/// Mean and sample standard deviation of a set of scores.
pub fn aggregate(scores: &[Scores]) -> (Scores, Scores) {
    let rows: Vec<Vec<f64>> = scores.iter().map(Scores::fields).collect();
    let width = rows.first().map(Vec::len).unwrap_or(4 + MAX_TOP_K);
    let n = rows.len() as f64;
    let mut mean = vec![0.0; width];
    let mut std = vec![0.0; width];
    // Welford's update keeps the mean of identical values exact.
    for j in 0..width {
        let (mut m, mut m2) = (0.0, 0.0);
        for (k, r) in rows.iter().enumerate() {
            let d = r[j] - m;
            m += d / (k + 1) as f64;
            m2 += d * (r[j] - m);
        }
        mean[j] = m;
        if rows.len() > 1 {
            std[j] = (m2 / (n - 1.0)).sqrt();
        }
    }
    (Scores::from_fields(&mean), Scores::from_fields(&std))
}

/// Shuffle once with `cfg.seed` and cut into `k` disjoint folds whose sizes
/// differ by at most one.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds
}

pub fn kfold(ds: &LabeledDataset, cfg: &TrainConfig, k: usize) -> Result<KfoldReport> {
    if k < 2 || k > ds.len() {
        return Err(Error::Config(format!(
            "cannot run {k}-fold cross-validation on {} rows",
            ds.len()
        )));
    }
    let folds = fold_indices(ds.len(), k, cfg.seed);
    let mut results = Vec::with_capacity(k);
    for (f, held_out) in folds.iter().enumerate() {
        let held: BTreeSet<usize> = held_out.iter().copied().collect();
        let train_idx: Vec<usize> = (0..ds.len()).filter(|i| !held.contains(i)).collect();
        let (model, _) = train(&ds.subset(&train_idx), cfg)?;
        let metrics = evaluate_batched(&model, &ds.subset(held_out), cfg.batch_eval)?;
        if metrics.unseen > 0 {
            warn!("fold {f}: {} rows with unseen labels", metrics.unseen);
        }
        results.push(metrics);
    }
    let scores: Vec<Scores> = results.iter().map(|m| m.scores.clone()).collect();
    let (mean, std) = aggregate(&scores);
    Ok(KfoldReport {
        folds: results,
        mean,
        std,
    })
}
