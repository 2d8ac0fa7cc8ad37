//! Neutral graph documents: typed layer nodes, directed edges and the
//! metadata a model publisher declared for them.
//!
//! A [`GraphDoc`] is what every later stage consumes. It can be read from the
//! JSON document form ([`parse_graph_doc`]) or built from an ONNX model
//! ([`onnx::from_onnx`]).

pub mod canon;
pub mod onnx;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Parameter name to canonical value, in declaration order.
pub type Params = IndexMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerNode {
    pub id: String,
    pub op_type: String,
    pub params: Params,
}

impl LayerNode {
    pub fn new(id: impl Into<String>, op_type: impl Into<String>) -> Self {
        LayerNode {
            id: id.into(),
            op_type: op_type.into(),
            params: Params::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    /// `Linear ['<in_features, 4096>', '<out_features, 4096>']`
    pub fn signature(&self) -> String {
        let entries: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| canon::quoted(&format!("<{k}, {v}>")))
            .collect();
        format!("{} [{}]", self.op_type, entries.join(", "))
    }

    /// Identity-free description of the layer: the bare op type when it has
    /// no parameters, otherwise its parameter signature.
    pub fn canonical(&self) -> String {
        if self.params.is_empty() {
            self.op_type.clone()
        } else {
            self.signature()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredMetadata {
    pub identifier: String,
    #[serde(default)]
    pub model_type: Option<String>,
    #[serde(default)]
    pub architecture: Option<String>,
    #[serde(default)]
    pub tasks: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphDoc {
    pub nodes: Vec<LayerNode>,
    pub edges: Vec<(String, String)>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub metadata: DeclaredMetadata,
}

impl GraphDoc {
    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn identifier(&self) -> &str {
        &self.metadata.identifier
    }
}

// Wire form of the document. Parameter values may be any JSON value on input
// and are canonicalized on the way in; they are always written as strings.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    nodes: Vec<RawNode>,
    edges: Vec<(String, String)>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    metadata: DeclaredMetadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    op_type: String,
    #[serde(default)]
    params: IndexMap<String, Value>,
}

#[derive(Serialize)]
struct OutDoc<'a> {
    nodes: Vec<OutNode<'a>>,
    edges: &'a [(String, String)],
    inputs: &'a [String],
    outputs: &'a [String],
    metadata: &'a DeclaredMetadata,
}

#[derive(Serialize)]
struct OutNode<'a> {
    id: &'a str,
    op_type: &'a str,
    params: &'a Params,
}

/// Parse the JSON graph-document form and check the structural invariants.
pub fn parse_graph_doc(text: &str) -> Result<GraphDoc> {
    let raw: RawDoc = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    let nodes = raw
        .nodes
        .into_iter()
        .map(|n| LayerNode {
            id: n.id,
            op_type: n.op_type,
            params: n
                .params
                .iter()
                .map(|(k, v)| (k.clone(), canon::canonical_json_value(v)))
                .collect(),
        })
        .collect();
    let doc = GraphDoc {
        nodes,
        edges: raw.edges,
        inputs: raw.inputs,
        outputs: raw.outputs,
        metadata: raw.metadata,
    };
    check_structure(&doc)?;
    Ok(doc)
}

pub fn serialize_graph_doc(doc: &GraphDoc) -> String {
    let out = OutDoc {
        nodes: doc
            .nodes
            .iter()
            .map(|n| OutNode {
                id: &n.id,
                op_type: &n.op_type,
                params: &n.params,
            })
            .collect(),
        edges: &doc.edges,
        inputs: &doc.inputs,
        outputs: &doc.outputs,
        metadata: &doc.metadata,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("graph document serializes");
    text.push('\n');
    text
}

/// The hard invariants: anything here makes the document unusable.
fn check_structure(doc: &GraphDoc) -> Result<()> {
    let report = validate_graph(doc);
    match report.findings.iter().find(|f| f.is_fatal()) {
        Some(finding) => Err(Error::Validation(finding.to_string())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    DuplicateId(String),
    EmptyOpType(String),
    DanglingEdge { from: String, to: String },
    NoInputs,
    NoOutputs,
    UnknownInput(String),
    UnknownOutput(String),
    UnreachableNode(String),
}

impl Finding {
    /// Fatal findings prevent building a rooted DAG; unreachable nodes are
    /// reported but simply dropped downstream.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Finding::UnreachableNode(_))
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Finding::EmptyOpType(id) => write!(f, "node `{id}` has an empty op_type"),
            Finding::DanglingEdge { from, to } => {
                write!(f, "dangling edge ({from}, {to}) references a missing node")
            }
            Finding::NoInputs => write!(f, "graph declares no inputs"),
            Finding::NoOutputs => write!(f, "graph declares no outputs"),
            Finding::UnknownInput(id) => write!(f, "input `{id}` is not a node"),
            Finding::UnknownOutput(id) => write!(f, "output `{id}` is not a node"),
            Finding::UnreachableNode(id) => write!(f, "unreachable node `{id}`"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn is_fatal(&self) -> bool {
        self.findings.iter().any(Finding::is_fatal)
    }
}

/// Report every violated invariant. Reachability is taken over the full edge
/// relation, which reaches exactly the nodes the cycle-broken DAG keeps.
pub fn validate_graph(doc: &GraphDoc) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen = HashSet::new();
    for node in &doc.nodes {
        if !seen.insert(node.id.as_str()) {
            findings.push(Finding::DuplicateId(node.id.clone()));
        }
        if node.op_type.is_empty() {
            findings.push(Finding::EmptyOpType(node.id.clone()));
        }
    }
    for (from, to) in &doc.edges {
        if !seen.contains(from.as_str()) || !seen.contains(to.as_str()) {
            findings.push(Finding::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
    if doc.inputs.is_empty() {
        findings.push(Finding::NoInputs);
    }
    if doc.outputs.is_empty() {
        findings.push(Finding::NoOutputs);
    }
    for id in &doc.inputs {
        if !seen.contains(id.as_str()) {
            findings.push(Finding::UnknownInput(id.clone()));
        }
    }
    for id in &doc.outputs {
        if !seen.contains(id.as_str()) {
            findings.push(Finding::UnknownOutput(id.clone()));
        }
    }

    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for (from, to) in &doc.edges {
        adjacency.entry(from).or_default().push(to);
    }
    let mut reached: HashSet<&str> = HashSet::new();
    let mut queue: VecDeque<&str> = doc
        .inputs
        .iter()
        .map(String::as_str)
        .filter(|id| seen.contains(id))
        .collect();
    while let Some(id) = queue.pop_front() {
        if reached.insert(id) {
            if let Some(next) = adjacency.get(id) {
                queue.extend(next.iter().copied());
            }
        }
    }
    let mut reported = HashSet::new();
    for node in &doc.nodes {
        if !reached.contains(node.id.as_str()) && reported.insert(node.id.as_str()) {
            findings.push(Finding::UnreachableNode(node.id.clone()));
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
        "nodes": [
            {"id": "in", "op_type": "Input"},
            {"id": "c", "op_type": "Conv2d", "params": {"kernel_size": [3, 3], "bias": true, "eps": 1e-5}},
            {"id": "out", "op_type": "Output"}
        ],
        "edges": [["in", "c"], ["c", "out"]],
        "inputs": ["in"],
        "outputs": ["out"],
        "metadata": {"identifier": "org/chain", "model_type": "conv", "tasks": ["image-classification"]}
    }"#;

    #[test]
    fn parses_minimal_chain() {
        let doc = parse_graph_doc(CHAIN).unwrap();
        assert_eq!(doc.nodes.len(), 3);
        assert_eq!(doc.edges.len(), 2);
        let conv = doc.node("c").unwrap();
        let params: Vec<_> = conv.params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(
            params,
            [("kernel_size", "(3, 3)"), ("bias", "True"), ("eps", "1e-05")]
        );
        assert_eq!(doc.metadata.architecture, None);
        assert!(validate_graph(&doc).is_empty());
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let text = CHAIN.replace(r#"["c", "out"]"#, r#"["c", "x"]"#);
        match parse_graph_doc(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("(c, x)"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = CHAIN.replace(r#""inputs""#, r#""extra": 1, "inputs""#);
        assert!(matches!(parse_graph_doc(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_text_reports_position() {
        let err = parse_graph_doc("{\n  \"nodes\": [\n    {\"id\": 3}\n  ]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_chain() {
        let doc = parse_graph_doc(CHAIN).unwrap();
        let again = parse_graph_doc(&serialize_graph_doc(&doc)).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn validation_findings() {
        let mut doc = parse_graph_doc(CHAIN).unwrap();
        doc.nodes.push(LayerNode::new("island", "Relu"));
        doc.nodes.push(LayerNode::new("c", "Relu"));
        let report = validate_graph(&doc);
        assert!(report.findings.contains(&Finding::UnreachableNode("island".into())));
        assert!(report.findings.contains(&Finding::DuplicateId("c".into())));
        assert!(report.is_fatal());

        let mut doc = parse_graph_doc(CHAIN).unwrap();
        doc.nodes.push(LayerNode::new("island", "Relu"));
        let report = validate_graph(&doc);
        assert_eq!(report.findings, vec![Finding::UnreachableNode("island".into())]);
        assert!(!report.is_fatal());
    }

    #[test]
    fn signature_format() {
        let node = LayerNode::new("l", "Linear")
            .with_param("in_features", "4096")
            .with_param("out_features", "4096");
        assert_eq!(
            node.signature(),
            "Linear ['<in_features, 4096>', '<out_features, 4096>']"
        );
        assert_eq!(LayerNode::new("r", "ReLU").canonical(), "ReLU");
        assert_eq!(LayerNode::new("r", "ReLU").signature(), "ReLU []");
    }
}
