//! Four-layer fully connected classifier with exact backpropagation.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Single-label classification; outputs a softmax distribution.
    Softmax,
    /// Multi-label classification; outputs independent sigmoid probabilities.
    Sigmoid,
}

/// Bijection between label strings and output columns, sorted by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDict {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelDict {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelDict { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Weights are stored `in x out`, so a batch forward pass is `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for weights and bias.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        DenseLayer {
            weights: Array2::from_shape_simple_fn((input, output), || rng.gen_range(-bound..bound)),
            bias: Array1::from_shape_simple_fn(output, || rng.gen_range(-bound..bound)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layers: Vec<DenseLayer>,
    pub(crate) head: Head,
    pub(crate) labels: LabelDict,
    pub(crate) embed_dim: Option<usize>,
    pub(crate) vocab_fingerprint: u128,
    pub(crate) normalize_inputs: bool,
}

/// Everything the backward pass needs from a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) input: Array2<f64>,
    /// Pre-activations of every layer; the last one holds the logits.
    pub(crate) pre: Vec<Array2<f64>>,
    /// Post-ReLU activations of the hidden layers.
    pub(crate) post: Vec<Array2<f64>>,
    /// Row-normalized third-layer pre-activation.
    pub(crate) embedding: Array2<f64>,
    pub(crate) embedding_norm: Array1<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embedding
    }
}

/// Parameter gradients, one `(weights, bias)` pair per layer.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

const EMBED_EPS: f64 = 1e-12;

impl MlpModel {
    /// `dims` lists input, hidden and output widths (five entries for the
    /// standard four layers).
    pub fn new<R: Rng>(dims: &[usize], head: Head, labels: LabelDict, rng: &mut R) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Config(format!(
                "need at least input, one hidden and output width, got {dims:?}"
            )));
        }
        if *dims.last().unwrap() != labels.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                got: *dims.last().unwrap(),
            });
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], rng))
            .collect();
        Ok(MlpModel {
            layers,
            head,
            labels,
            embed_dim: None,
            vocab_fingerprint: 0,
            normalize_inputs: false,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, head: Head, labels: LabelDict) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape {
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        let out = layers.last().map(DenseLayer::output_dim).unwrap_or(0);
        if out != labels.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                got: out,
            });
        }
        Ok(MlpModel {
            layers,
            head,
            labels,
            embed_dim: None,
            vocab_fingerprint: 0,
            normalize_inputs: false,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn labels(&self) -> &LabelDict {
        &self.labels
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.embed_dim
    }

    pub fn vocab_fingerprint(&self) -> u128 {
        self.vocab_fingerprint
    }

    pub fn set_vocab_fingerprint(&mut self, fingerprint: u128) {
        self.vocab_fingerprint = fingerprint;
    }

    pub fn normalizes_inputs(&self) -> bool {
        self.normalize_inputs
    }

    /// The layer whose pre-activation is the embedding: the penultimate one.
    fn embedding_layer(&self) -> usize {
        self.layers.len().saturating_sub(2)
    }

    pub(crate) fn prepare_input(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut x = x.to_owned();
        if self.normalize_inputs {
            for mut row in x.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
            }
        }
        x
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let input = self.prepare_input(x);
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = {
                let source = if i == 0 { input.view() } else { post[i - 1].view() };
                layer.apply(&source)
            };
            if i < last {
                post.push(z.mapv(|v: f64| v.max(0.0)));
            }
            pre.push(z);
        }
        let emb_source = &pre[self.embedding_layer()];
        let embedding_norm = emb_source
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(EMBED_EPS))
            .collect::<Array1<f64>>();
        let embedding = emb_source / &embedding_norm.view().insert_axis(Axis(1));
        Ok(ForwardCache {
            input,
            pre,
            post,
            embedding,
            embedding_norm,
        })
    }

    /// Logits for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let cache = self.forward_batch(view)?;
        Ok(cache.logits().row(0).to_vec())
    }

    /// Logits and the unit-norm embedding for one input.
    pub fn forward_with_embedding(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let cache = self.forward_batch(view)?;
        Ok((cache.logits().row(0).to_vec(), cache.embedding.row(0).to_vec()))
    }

    /// Backpropagate `d_logits` (and optionally a gradient with respect to
    /// the unit-norm embeddings) to all parameters.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: ArrayView2<f64>,
        d_embedding: Option<ArrayView2<f64>>,
    ) -> Gradients {
        let n_layers = self.layers.len();
        let emb_layer = self.embedding_layer();
        let mut grads: Vec<DenseLayer> = Vec::with_capacity(n_layers);
        let mut delta = d_logits.to_owned();
        for i in (0..n_layers).rev() {
            if i < n_layers - 1 {
                // through the ReLU
                delta.zip_mut_with(&cache.pre[i], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                if i == emb_layer {
                    if let Some(g) = d_embedding {
                        // d(u/|u|)/du applied row-wise: (g - e (e.g)) / |u|
                        let e = &cache.embedding;
                        let eg = (e * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
                        let projected = (&g - &(e * &eg))
                            / cache.embedding_norm.view().insert_axis(Axis(1));
                        delta += &projected;
                    }
                }
            }
            let source = if i == 0 {
                cache.input.view()
            } else {
                cache.post[i - 1].view()
            };
            let d_weights = source.t().dot(&delta);
            let d_bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[i].weights.t());
            grads.push(DenseLayer {
                weights: d_weights,
                bias: d_bias,
            });
            delta = next;
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Label distribution: softmax for single-label, per-label sigmoid otherwise.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = self.forward(x)?;
        Ok(self.probabilities(&logits))
    }

    pub(crate) fn probabilities(&self, logits: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Softmax => super::loss::softmax(logits),
            Head::Sigmoid => logits.iter().map(|&z| super::loss::sigmoid(z)).collect(),
        }
    }

    /// The `k` most probable labels, ties broken by label order.
    pub fn predict_topk(&self, x: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
        let probs = self.predict(x)?;
        Ok(rank(&probs)
            .into_iter()
            .take(k)
            .map(|i| (self.labels.label(i).to_string(), probs[i]))
            .collect())
    }
}

/// Indices by descending probability, ties by ascending index.
pub fn rank(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> LabelDict {
        LabelDict::new((0..n).map(|i| format!("c{i}")))
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut layers: Vec<DenseLayer> = [(3, 4), (4, 4), (4, 4), (4, 2)]
            .iter()
            .map(|&(i, o)| DenseLayer::zeros(i, o))
            .collect();
        layers[3].bias = Array1::from(vec![0.25, -1.5]);
        let m = MlpModel::from_layers(layers, Head::Softmax, labels(2)).unwrap();
        assert_eq!(m.forward(&[5.0, -2.0, 1.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_layers_reproduce_input() {
        let eye = |n: usize| DenseLayer {
            weights: Array2::eye(n),
            bias: Array1::zeros(n),
        };
        let m = MlpModel::from_layers(vec![eye(1), eye(1), eye(1), eye(1)], Head::Softmax, labels(1))
            .unwrap();
        assert_eq!(m.forward(&[0.75]).unwrap(), vec![0.75]);
    }

    #[test]
    fn matches_naive_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::new(&[6, 5, 4, 3, 2], Head::Softmax, labels(2), &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut a = x.clone();
        for (li, layer) in m.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.output_dim()];
            for (o, slot) in out.iter_mut().enumerate() {
                let mut s = layer.bias[o];
                for (i, xi) in a.iter().enumerate() {
                    s += xi * layer.weights[[i, o]];
                }
                *slot = if li + 1 < m.layers.len() { s.max(0.0) } else { s };
            }
            a = out;
        }
        let got = m.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&a) {
            assert!((g - e).abs() < 1e-6);
        }
    }

    #[test]
    fn embedding_is_unit_norm_and_shape_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpModel::new(&[4, 8, 8, 6, 3], Head::Sigmoid, labels(3), &mut rng).unwrap();
        let (_, e) = m.forward_with_embedding(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.len(), 6);
        let norm: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape { expected: 4, got: 1 })));
    }

    #[test]
    fn topk_and_uniform() {
        let layers: Vec<DenseLayer> = [(2, 2), (2, 2), (2, 2), (2, 3)]
            .iter()
            .map(|&(i, o)| DenseLayer::zeros(i, o))
            .collect();
        let m = MlpModel::from_layers(layers, Head::Softmax, labels(3)).unwrap();
        let p = m.predict(&[1.0, 1.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let top = m.predict_topk(&[1.0, 1.0], 3).unwrap();
        let names: Vec<&str> = top.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(names, ["c0", "c1", "c2"]);
    }

    #[test]
    fn rank_matches_argsort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let probs: Vec<f64> = (0..7).map(|_| (rng.gen_range(0..4) as f64) / 4.0).collect();
            // oracle: repeated selection of the first maximum
            let mut left: Vec<usize> = (0..7).collect();
            let mut oracle = Vec::new();
            while !left.is_empty() {
                let mut best = 0;
                for j in 1..left.len() {
                    if probs[left[j]] > probs[left[best]] {
                        best = j;
                    }
                }
                oracle.push(left.remove(best));
            }
            assert_eq!(rank(&probs), oracle);
        }
    }
}
