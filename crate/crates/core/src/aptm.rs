//! Canonical abstract architecture of a model graph.
//!
//! The pipeline is `to_rooted_dag` → `assign_hashes` → `serialize_aptm`:
//!
//! 1. A DFS from the graph inputs (in node-id order) drops every edge whose
//!    target is still on the DFS stack, which leaves a rooted DAG.
//! 2. Each layer gets a 128-bit structural hash computed bottom-up from its
//!    own canonical text and the wrapping sum of its children's hashes. Node
//!    ids never enter the hash, and the sum makes the result independent of
//!    the order in which branches were written down.
//! 3. Layers are ordered by `(hash, canonical text, first DFS visit)`, and a
//!    second DFS that visits children in that order yields the layer sequence.

use std::cmp::Ordering;
use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_128;

use crate::error::{Error, Result};
use crate::graph::{validate_graph, GraphDoc, LayerNode, Params};

pub const INPUT_TOKEN: &str = "[INPUT]";
pub const OUTPUT_TOKEN: &str = "[OUTPUT]";

/// 128-bit structural hash of a layer and everything below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StructuralHash(pub u128);

impl StructuralHash {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        StructuralHash(xxh3_128(bytes))
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl std::fmt::Display for StructuralHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A rooted DAG over the reachable layers of a graph document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<LayerNode>,
    /// Child indices, sorted by child id.
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
    outputs: Vec<usize>,
    back_edges: Vec<(String, String)>,
    /// Order in which the cycle-breaking DFS first reached each node.
    visit_index: Vec<usize>,
    hashes: Option<Vec<StructuralHash>>,
}

impl Dag {
    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn roots(&self) -> impl Iterator<Item = &str> {
        self.roots.iter().map(|&i| self.nodes[i].id.as_str())
    }

    pub fn outputs(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|&i| self.nodes[i].id.as_str())
    }

    pub fn back_edges(&self) -> &[(String, String)] {
        &self.back_edges
    }

    pub fn children_of(&self, id: &str) -> Option<Vec<&str>> {
        let idx = self.nodes.iter().position(|n| n.id == id)?;
        Some(
            self.children[idx]
                .iter()
                .map(|&c| self.nodes[c].id.as_str())
                .collect(),
        )
    }

    /// Retained edges as `(from, to)` id pairs.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(from, kids)| {
                kids.iter()
                    .map(move |&to| (self.nodes[from].id.as_str(), self.nodes[to].id.as_str()))
            })
            .collect()
    }

    pub fn hash_of(&self, id: &str) -> Option<StructuralHash> {
        let hashes = self.hashes.as_ref()?;
        let idx = self.nodes.iter().position(|n| n.id == id)?;
        Some(hashes[idx])
    }

    pub fn has_hashes(&self) -> bool {
        self.hashes.is_some()
    }
}

/// Break cycles and drop unreachable nodes.
pub fn to_rooted_dag(doc: &GraphDoc) -> Result<Dag> {
    let report = validate_graph(doc);
    if let Some(finding) = report.findings.iter().find(|f| f.is_fatal()) {
        return Err(Error::Validation(finding.to_string()));
    }

    let index: HashMap<&str, usize> = doc
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); doc.nodes.len()];
    for (from, to) in &doc.edges {
        adjacency[index[from.as_str()]].push(index[to.as_str()]);
    }
    for kids in &mut adjacency {
        kids.sort_by(|&a, &b| doc.nodes[a].id.cmp(&doc.nodes[b].id));
        kids.dedup();
    }
    let mut roots: Vec<usize> = doc.inputs.iter().map(|id| index[id.as_str()]).collect();
    roots.sort_by(|&a, &b| doc.nodes[a].id.cmp(&doc.nodes[b].id));
    roots.dedup();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = doc.nodes.len();
    let mut mark = vec![Mark::New; n];
    let mut visit_index = vec![usize::MAX; n];
    let mut kept: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut back_edges = Vec::new();
    let mut visits = 0;
    for &root in &roots {
        if mark[root] != Mark::New {
            continue;
        }
        mark[root] = Mark::Open;
        visit_index[root] = visits;
        visits += 1;
        let mut stack = vec![(root, 0usize)];
        while let Some(frame) = stack.last_mut() {
            let (node, next) = *frame;
            if next == adjacency[node].len() {
                mark[node] = Mark::Done;
                stack.pop();
                continue;
            }
            frame.1 += 1;
            let child = adjacency[node][next];
            match mark[child] {
                Mark::Open => back_edges.push((doc.nodes[node].id.clone(), doc.nodes[child].id.clone())),
                Mark::Done => kept[node].push(child),
                Mark::New => {
                    kept[node].push(child);
                    mark[child] = Mark::Open;
                    visit_index[child] = visits;
                    visits += 1;
                    stack.push((child, 0));
                }
            }
        }
    }

    // Re-index over reached nodes only.
    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for (i, node) in doc.nodes.iter().enumerate() {
        if mark[i] == Mark::New {
            warn!("dropping node `{}`: not reachable from any input", node.id);
        } else {
            remap[i] = nodes.len();
            nodes.push(node.clone());
        }
    }
    if nodes.is_empty() {
        return Err(Error::EmptyReachability);
    }
    let mut children = vec![Vec::new(); nodes.len()];
    let mut visit = vec![0; nodes.len()];
    for i in 0..n {
        if remap[i] != usize::MAX {
            children[remap[i]] = kept[i].iter().map(|&c| remap[c]).collect();
            visit[remap[i]] = visit_index[i];
        }
    }
    let roots = roots.into_iter().map(|r| remap[r]).collect();
    let mut outputs: Vec<usize> = Vec::new();
    for id in &doc.outputs {
        let mapped = remap[index[id.as_str()]];
        if mapped != usize::MAX && !outputs.contains(&mapped) {
            outputs.push(mapped);
        }
    }
    outputs.sort_by(|&a, &b| nodes[a].id.cmp(&nodes[b].id));

    Ok(Dag {
        nodes,
        children,
        roots,
        outputs,
        back_edges,
        visit_index: visit,
        hashes: None,
    })
}

fn layer_hash(canonical: &str, child_sum: Option<u128>) -> StructuralHash {
    match child_sum {
        None => StructuralHash::of_bytes(canonical.as_bytes()),
        Some(sum) => {
            let mut bytes = Vec::with_capacity(canonical.len() + 17);
            bytes.extend_from_slice(canonical.as_bytes());
            bytes.push(0);
            bytes.extend_from_slice(&sum.to_le_bytes());
            StructuralHash::of_bytes(&bytes)
        }
    }
}

/// Assign structural hashes bottom-up.
pub fn assign_hashes(mut dag: Dag) -> Dag {
    let n = dag.nodes.len();
    let mut hashes: Vec<Option<StructuralHash>> = vec![None; n];
    for start in 0..n {
        if hashes[start].is_some() {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        while let Some(frame) = stack.last_mut() {
            let (node, next) = *frame;
            if let Some(&child) = dag.children[node].get(next) {
                frame.1 += 1;
                if hashes[child].is_none() {
                    stack.push((child, 0));
                }
                continue;
            }
            stack.pop();
            let kids = &dag.children[node];
            let sum = if kids.is_empty() {
                None
            } else {
                Some(kids.iter().fold(0u128, |acc, &c| {
                    acc.wrapping_add(hashes[c].expect("children hashed first").0)
                }))
            };
            hashes[node] = Some(layer_hash(&dag.nodes[node].canonical(), sum));
        }
    }
    dag.hashes = Some(hashes.into_iter().map(|h| h.expect("every node hashed")).collect());
    dag
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AptmLayer {
    pub id: String,
    pub op_type: String,
    pub params: Params,
    pub hash: StructuralHash,
    /// Wrapping sum of the children's hashes (zero for leaves).
    pub child_hash_sum: u128,
    /// Indices into [`Aptm::layers`], in canonical order.
    pub children: Vec<usize>,
}

impl AptmLayer {
    pub fn canonical(&self) -> String {
        LayerNode {
            id: String::new(),
            op_type: self.op_type.clone(),
            params: self.params.clone(),
        }
        .canonical()
    }
}

/// Abstract architecture: hashed layers with their deterministic orders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aptm {
    pub layers: Vec<AptmLayer>,
    /// Indices of the rooted layers, in canonical order.
    pub roots: Vec<usize>,
    /// Indices of the output layers, in canonical order.
    pub outputs: Vec<usize>,
    /// Layer ids sorted by `(hash, canonical text, DFS visit)`.
    pub hash_order: Vec<String>,
    /// Layer ids in canonical DFS emission order.
    pub sequence_order: Vec<String>,
}

impl Aptm {
    pub fn layer(&self, id: &str) -> Option<&AptmLayer> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Retained edges as `(from, to)` layer-index pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.children.iter().map(move |&c| (i, c)))
    }
}

/// Produce the canonical orderings. Hashes are assigned first if missing.
pub fn serialize_aptm(dag: &Dag) -> Aptm {
    let owned;
    let dag = if dag.hashes.is_some() {
        dag
    } else {
        owned = assign_hashes(dag.clone());
        &owned
    };
    let hashes = dag.hashes.as_ref().expect("hashes assigned");
    let canon: Vec<String> = dag.nodes.iter().map(LayerNode::canonical).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering {
        hashes[*a]
            .cmp(&hashes[*b])
            .then_with(|| canon[*a].cmp(&canon[*b]))
            .then_with(|| dag.visit_index[*a].cmp(&dag.visit_index[*b]))
    };

    let mut order: Vec<usize> = (0..dag.nodes.len()).collect();
    order.sort_by(cmp);

    let sorted_children: Vec<Vec<usize>> = dag
        .children
        .iter()
        .map(|kids| {
            let mut kids = kids.clone();
            kids.sort_by(cmp);
            kids
        })
        .collect();
    let mut roots = dag.roots.clone();
    roots.sort_by(cmp);
    let mut outputs = dag.outputs.clone();
    outputs.sort_by(cmp);

    let mut seen = vec![false; dag.nodes.len()];
    let mut sequence = Vec::with_capacity(dag.nodes.len());
    for &root in &roots {
        if seen[root] {
            continue;
        }
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if seen[node] {
                continue;
            }
            seen[node] = true;
            sequence.push(node);
            stack.extend(sorted_children[node].iter().rev().filter(|&&c| !seen[c]));
        }
    }

    let layers = dag
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| AptmLayer {
            id: node.id.clone(),
            op_type: node.op_type.clone(),
            params: node.params.clone(),
            hash: hashes[i],
            child_hash_sum: dag.children[i]
                .iter()
                .fold(0u128, |acc, &c| acc.wrapping_add(hashes[c].0)),
            children: sorted_children[i].clone(),
        })
        .collect();
    let id = |i: &usize| dag.nodes[*i].id.clone();
    Aptm {
        layers,
        roots,
        outputs,
        hash_order: order.iter().map(id).collect(),
        sequence_order: sequence.iter().map(id).collect(),
    }
}

/// Full canonicalization of a graph document.
pub fn build_aptm(doc: &GraphDoc) -> Result<Aptm> {
    Ok(serialize_aptm(&assign_hashes(to_rooted_dag(doc)?)))
}

/// `[INPUT]` per root, op types in sequence order, `[OUTPUT]` per output.
pub fn layer_sequence(aptm: &Aptm) -> Vec<String> {
    let by_id: HashMap<&str, &AptmLayer> =
        aptm.layers.iter().map(|l| (l.id.as_str(), l)).collect();
    let mut tokens = Vec::with_capacity(aptm.layers.len() + aptm.roots.len() + aptm.outputs.len());
    tokens.extend(std::iter::repeat_n(INPUT_TOKEN.to_string(), aptm.roots.len()));
    tokens.extend(
        aptm.sequence_order
            .iter()
            .map(|id| by_id[id.as_str()].op_type.clone()),
    );
    tokens.extend(std::iter::repeat_n(OUTPUT_TOKEN.to_string(), aptm.outputs.len()));
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportLayer {
    pub op_type: String,
    pub params: Params,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AptmExport {
    pub layers: Vec<ExportLayer>,
    pub hash_order: Vec<String>,
    pub sequence: String,
}

impl AptmExport {
    pub fn from_aptm(aptm: &Aptm) -> Self {
        let by_id: HashMap<&str, &AptmLayer> =
            aptm.layers.iter().map(|l| (l.id.as_str(), l)).collect();
        let ordered: Vec<&AptmLayer> = aptm
            .hash_order
            .iter()
            .map(|id| by_id[id.as_str()])
            .collect();
        AptmExport {
            layers: ordered
                .iter()
                .map(|l| ExportLayer {
                    op_type: l.op_type.clone(),
                    params: l.params.clone(),
                    hash: l.hash.to_hex(),
                })
                .collect(),
            hash_order: ordered.iter().map(|l| l.hash.to_hex()).collect(),
            sequence: layer_sequence(aptm).join(" "),
        }
    }
}

/// Id-free JSON export: layers in hash order, the hash order itself, and the
/// whitespace-joined layer sequence.
pub fn export_aptm_json(aptm: &Aptm) -> String {
    let mut text = serde_json::to_string_pretty(&AptmExport::from_aptm(aptm))
        .expect("aptm export serializes");
    text.push('\n');
    text
}
