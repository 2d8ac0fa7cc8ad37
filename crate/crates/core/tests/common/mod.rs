//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use archaudit::graph::{DeclaredMetadata, GraphDoc, LayerNode};
use rand::seq::SliceRandom;
use rand::Rng;

/// A deliberately small palette so that sibling branches often tie.
fn random_layer<R: Rng>(rng: &mut R, id: String) -> LayerNode {
    match rng.gen_range(0..6) {
        0 => LayerNode::new(id, "Linear")
            .with_param("in_features", ["64", "128"][rng.gen_range(0..2)])
            .with_param("out_features", ["64", "128"][rng.gen_range(0..2)]),
        1 => LayerNode::new(id, "ReLU"),
        2 => LayerNode::new(id, "LayerNorm")
            .with_param("normalized_shape", "(64,)")
            .with_param("eps", "1e-05"),
        3 => LayerNode::new(id, "Conv2d").with_param("kernel_size", "(3, 3)"),
        4 => LayerNode::new(id, "Add"),
        _ => LayerNode::new(id, "Dropout").with_param("p", "0.1"),
    }
}

/// Random rooted DAG with at least one fork. Node `n0` is the only input;
/// every sink is an output. Edges always point from lower to higher index.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize) -> GraphDoc {
    assert!(n >= 3);
    let nodes: Vec<LayerNode> = (0..n).map(|i| random_layer(rng, format!("n{i}"))).collect();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    edges.insert((0, 1));
    edges.insert((0, 2));
    for i in 3..n {
        edges.insert((rng.gen_range(0..i), i));
        if rng.gen_bool(0.3) {
            edges.insert((rng.gen_range(0..i), i));
        }
    }
    let has_child: BTreeSet<usize> = edges.iter().map(|&(a, _)| a).collect();
    let id = |i: usize| format!("n{i}");
    GraphDoc {
        edges: edges.iter().map(|&(a, b)| (id(a), id(b))).collect(),
        inputs: vec![id(0)],
        outputs: (0..n).filter(|i| !has_child.contains(i)).map(id).collect(),
        nodes,
        metadata: DeclaredMetadata {
            identifier: "random/dag".to_string(),
            ..Default::default()
        },
    }
}

/// Same graph, declared differently: node, edge and output order shuffled
/// and every id replaced by a fresh random name.
pub fn permuted<R: Rng>(doc: &GraphDoc, rng: &mut R) -> GraphDoc {
    let mut fresh: Vec<u32> = Vec::new();
    while fresh.len() < doc.nodes.len() {
        let v = rng.gen::<u32>();
        if !fresh.contains(&v) {
            fresh.push(v);
        }
    }
    let rename: HashMap<&str, String> = doc
        .nodes
        .iter()
        .zip(&fresh)
        .map(|(n, v)| (n.id.as_str(), format!("k{v:08x}")))
        .collect();
    let mut nodes: Vec<LayerNode> = doc
        .nodes
        .iter()
        .map(|n| LayerNode {
            id: rename[n.id.as_str()].clone(),
            ..n.clone()
        })
        .collect();
    nodes.shuffle(rng);
    let mut edges: Vec<(String, String)> = doc
        .edges
        .iter()
        .map(|(a, b)| (rename[a.as_str()].clone(), rename[b.as_str()].clone()))
        .collect();
    edges.shuffle(rng);
    let mut outputs: Vec<String> = doc.outputs.iter().map(|o| rename[o.as_str()].clone()).collect();
    outputs.shuffle(rng);
    GraphDoc {
        nodes,
        edges,
        inputs: doc.inputs.iter().map(|i| rename[i.as_str()].clone()).collect(),
        outputs,
        metadata: doc.metadata.clone(),
    }
}

/// Add `k` edges that each close a cycle (pointing from a node back to one
/// of its ancestors, or to itself).
pub fn inject_cycles<R: Rng>(doc: &mut GraphDoc, rng: &mut R, k: usize) {
    let ids: Vec<String> = doc.nodes.iter().map(|n| n.id.clone()).collect();
    for _ in 0..k {
        let to = rng.gen_range(1..ids.len());
        let ancestors = ancestors_of(&doc.edges, &ids[to]);
        let from = if ancestors.is_empty() || rng.gen_bool(0.1) {
            ids[to].clone()
        } else {
            let list: Vec<&String> = ancestors.iter().collect();
            list[rng.gen_range(0..list.len())].clone()
        };
        doc.edges.push((ids[to].clone(), from));
    }
}

fn ancestors_of(edges: &[(String, String)], id: &str) -> BTreeSet<String> {
    let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in edges {
        parents.entry(b.as_str()).or_default().push(a.as_str());
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([id]);
    while let Some(x) = queue.pop_front() {
        for &p in parents.get(x).into_iter().flatten() {
            if seen.insert(p.to_string()) {
                queue.push_back(p);
            }
        }
    }
    seen
}

/// Nodes reachable from `starts` along `edges`.
pub fn reachable<'a>(starts: impl IntoIterator<Item = &'a str>, edges: &[(&'a str, &'a str)]) -> BTreeSet<&'a str> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = starts.into_iter().collect();
    for s in &queue {
        seen.insert(s);
    }
    while let Some(x) = queue.pop_front() {
        for &c in adj.get(x).into_iter().flatten() {
            if seen.insert(c) {
                queue.push_back(c);
            }
        }
    }
    seen
}

/// Kahn's algorithm: true when `edges` over `nodes` admit a topological order.
pub fn kahn_acyclic(nodes: &BTreeSet<&str>, edges: &[(&str, &str)]) -> bool {
    let mut indegree: BTreeMap<&str, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for &(a, b) in edges {
        *indegree.get_mut(b).expect("edge target is a node") += 1;
        adj.entry(a).or_default().push(b);
    }
    let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut emitted = 0;
    while let Some(x) = queue.pop_front() {
        emitted += 1;
        for &c in adj.get(x).into_iter().flatten() {
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(c);
            }
        }
    }
    emitted == nodes.len()
}

/// Euclidean relative error between an analytic and a numeric gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-log(exp(z_y) / sum_j exp(z_j))`.
pub fn ce_oracle(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

/// Mean over labels of `-(y log s(x) + (1 - y) log(1 - s(x)))`.
pub fn bce_oracle(logits: &[f64], targets: &[bool]) -> f64 {
    logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            // log s(x) = -softplus(-x), log(1 - s(x)) = -softplus(x)
            let softplus = |v: f64| v.max(0.0) + (-v.abs()).exp().ln_1p();
            if y {
                softplus(-x)
            } else {
                softplus(x)
            }
        })
        .sum::<f64>()
        / logits.len() as f64
}

/// Weighted supervised contrastive loss straight from its definition,
/// on raw (not re-normalized) rows `z`. `weight(i, p)` returns `Some(s)` when
/// `p` is a positive of anchor `i`.
pub fn contrastive_oracle(z: &[Vec<f64>], tau: f64, weight: impl Fn(usize, usize) -> Option<f64>) -> f64 {
    let n = z.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for i in 0..n {
        let positives: Vec<(usize, f64)> = (0..n).filter(|&p| p != i).filter_map(|p| weight(i, p).map(|w| (p, w))).collect();
        if positives.is_empty() {
            continue;
        }
        let denom: f64 = (0..n).filter(|&a| a != i).map(|a| (dot(&z[i], &z[a]) / tau).exp()).sum();
        let mut term = 0.0;
        for (p, w) in &positives {
            term += w * -((dot(&z[i], &z[*p]) / tau).exp() / denom).ln();
        }
        total += term / positives.len() as f64;
    }
    total
}

pub fn supcon_oracle(z: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    contrastive_oracle(z, tau, |i, p| (labels[i] == labels[p]).then_some(1.0))
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn multisupcon_oracle(z: &[Vec<f64>], sets: &[BTreeSet<usize>], tau: f64, threshold: f64) -> f64 {
    contrastive_oracle(z, tau, |i, p| {
        let s = jaccard(&sets[i], &sets[p]);
        (s >= threshold).then_some(s)
    })
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}
