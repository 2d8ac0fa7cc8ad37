//! ONNX ingestion.
//!
//! Only the parts of `onnx.ModelProto` needed to recover structure are
//! decoded: operator names, attributes, and tensor names. Weight payloads,
//! type information and shapes are skipped by the decoder.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use log::warn;
use prost::Message;

use super::canon::{float32_repr, quoted, tuple};
use super::{DeclaredMetadata, GraphDoc, LayerNode, Params};
use crate::error::{Error, Result};

/// Wire-compatible subset of `onnx.proto`. Field numbers follow the upstream
/// schema; everything not declared here is skipped while decoding.
pub mod proto {
    #[derive(Clone, PartialEq, prost::Message)]
    pub struct ModelProto {
        #[prost(int64, tag = "1")]
        pub ir_version: i64,
        #[prost(string, tag = "2")]
        pub producer_name: String,
        #[prost(message, optional, tag = "7")]
        pub graph: Option<GraphProto>,
        #[prost(message, repeated, tag = "14")]
        pub metadata_props: Vec<StringStringEntryProto>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct StringStringEntryProto {
        #[prost(string, tag = "1")]
        pub key: String,
        #[prost(string, tag = "2")]
        pub value: String,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct GraphProto {
        #[prost(message, repeated, tag = "1")]
        pub node: Vec<NodeProto>,
        #[prost(string, tag = "2")]
        pub name: String,
        #[prost(message, repeated, tag = "5")]
        pub initializer: Vec<TensorProto>,
        #[prost(message, repeated, tag = "11")]
        pub input: Vec<ValueInfoProto>,
        #[prost(message, repeated, tag = "12")]
        pub output: Vec<ValueInfoProto>,
        #[prost(message, repeated, tag = "15")]
        pub sparse_initializer: Vec<SparseTensorProto>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct NodeProto {
        #[prost(string, repeated, tag = "1")]
        pub input: Vec<String>,
        #[prost(string, repeated, tag = "2")]
        pub output: Vec<String>,
        #[prost(string, tag = "3")]
        pub name: String,
        #[prost(string, tag = "4")]
        pub op_type: String,
        #[prost(message, repeated, tag = "5")]
        pub attribute: Vec<AttributeProto>,
        #[prost(string, tag = "7")]
        pub domain: String,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct AttributeProto {
        #[prost(string, tag = "1")]
        pub name: String,
        #[prost(float, tag = "2")]
        pub f: f32,
        #[prost(int64, tag = "3")]
        pub i: i64,
        #[prost(bytes = "vec", tag = "4")]
        pub s: Vec<u8>,
        #[prost(message, optional, tag = "5")]
        pub t: Option<TensorProto>,
        #[prost(message, optional, boxed, tag = "6")]
        pub g: Option<Box<GraphProto>>,
        #[prost(float, repeated, tag = "7")]
        pub floats: Vec<f32>,
        #[prost(int64, repeated, tag = "8")]
        pub ints: Vec<i64>,
        #[prost(bytes = "vec", repeated, tag = "9")]
        pub strings: Vec<Vec<u8>>,
        #[prost(int32, tag = "20")]
        pub r#type: i32,
    }

    /// `AttributeProto.AttributeType` values.
    pub mod attribute_type {
        pub const UNDEFINED: i32 = 0;
        pub const FLOAT: i32 = 1;
        pub const INT: i32 = 2;
        pub const STRING: i32 = 3;
        pub const TENSOR: i32 = 4;
        pub const GRAPH: i32 = 5;
        pub const FLOATS: i32 = 6;
        pub const INTS: i32 = 7;
        pub const STRINGS: i32 = 8;
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct TensorProto {
        #[prost(int64, repeated, tag = "1")]
        pub dims: Vec<i64>,
        #[prost(string, tag = "8")]
        pub name: String,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct SparseTensorProto {
        #[prost(message, optional, tag = "1")]
        pub values: Option<TensorProto>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct ValueInfoProto {
        #[prost(string, tag = "1")]
        pub name: String,
    }
}

use proto::attribute_type as at;

pub fn from_onnx_file(path: impl AsRef<Path>) -> Result<GraphDoc> {
    let bytes = std::fs::read(path)?;
    from_onnx(&bytes)
}

/// Build a [`GraphDoc`] from a serialized ONNX model.
///
/// Graph inputs that are initializers are weights, not data, and produce no
/// edges. A node input with no producer, no initializer and no graph input
/// is logged and its edge omitted.
pub fn from_onnx(bytes: &[u8]) -> Result<GraphDoc> {
    let model = proto::ModelProto::decode(bytes)
        .map_err(|e| Error::Ingest(format!("cannot decode ModelProto: {e}")))?;
    let graph = model
        .graph
        .as_ref()
        .ok_or_else(|| Error::Ingest("ModelProto has no graph".to_string()))?;
    if graph.node.is_empty() {
        return Err(Error::Ingest(format!("graph `{}` has no nodes", graph.name)));
    }

    let ids = assign_ids(&graph.node);
    let mut nodes = Vec::with_capacity(graph.node.len());
    for (node, id) in graph.node.iter().zip(&ids) {
        if node.op_type.is_empty() {
            return Err(Error::Ingest(format!("node `{id}` has no op_type")));
        }
        let mut params = Params::new();
        for attr in &node.attribute {
            params.insert(attr.name.clone(), attribute_value(attr, id)?);
        }
        nodes.push(LayerNode {
            id: id.clone(),
            op_type: node.op_type.clone(),
            params,
        });
    }

    let initializers: HashSet<&str> = graph
        .initializer
        .iter()
        .map(|t| t.name.as_str())
        .chain(
            graph
                .sparse_initializer
                .iter()
                .filter_map(|s| s.values.as_ref().map(|t| t.name.as_str())),
        )
        .collect();
    let graph_inputs: HashSet<&str> = graph
        .input
        .iter()
        .map(|v| v.name.as_str())
        .filter(|name| !initializers.contains(name))
        .collect();

    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (idx, node) in graph.node.iter().enumerate() {
        for out in node.output.iter().filter(|o| !o.is_empty()) {
            if let Some(prev) = producer.insert(out.as_str(), idx) {
                warn!(
                    "tensor `{out}` produced by both `{}` and `{}`; keeping the latter",
                    ids[prev], ids[idx]
                );
            }
        }
    }

    let mut edges = Vec::new();
    let mut seen_edges = HashSet::new();
    let mut consumes_input = vec![false; graph.node.len()];
    for (idx, node) in graph.node.iter().enumerate() {
        for tensor in node.input.iter().filter(|t| !t.is_empty()) {
            if let Some(&src) = producer.get(tensor.as_str()) {
                if seen_edges.insert((src, idx)) {
                    edges.push((src, idx));
                }
            } else if graph_inputs.contains(tensor.as_str()) {
                consumes_input[idx] = true;
            } else if !initializers.contains(tensor.as_str()) {
                warn!(
                    "node `{}` consumes tensor `{tensor}` with no producer; edge omitted",
                    ids[idx]
                );
            }
        }
    }

    let mut in_degree = vec![0usize; graph.node.len()];
    let mut out_degree = vec![0usize; graph.node.len()];
    for &(a, b) in &edges {
        out_degree[a] += 1;
        in_degree[b] += 1;
    }
    // Roots: consumers of graph inputs plus source nodes (e.g. Constant).
    let inputs: Vec<String> = (0..nodes.len())
        .filter(|&i| consumes_input[i] || in_degree[i] == 0)
        .map(|i| ids[i].clone())
        .collect();
    let graph_outputs: HashSet<&str> = graph.output.iter().map(|v| v.name.as_str()).collect();
    // Outputs: producers of graph outputs plus sinks.
    let outputs: Vec<String> = graph
        .node
        .iter()
        .enumerate()
        .filter(|(i, node)| {
            out_degree[*i] == 0 || node.output.iter().any(|o| graph_outputs.contains(o.as_str()))
        })
        .map(|(i, _)| ids[i].clone())
        .collect();

    let props: HashMap<&str, &str> = model
        .metadata_props
        .iter()
        .map(|p| (p.key.as_str(), p.value.as_str()))
        .collect();
    let metadata = DeclaredMetadata {
        identifier: props
            .get("identifier")
            .map(|s| s.to_string())
            .unwrap_or_else(|| graph.name.clone()),
        model_type: props.get("model_type").map(|s| s.to_string()),
        architecture: props.get("architecture").map(|s| s.to_string()),
        tasks: props
            .get("tasks")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default(),
    };

    Ok(GraphDoc {
        nodes,
        edges: edges
            .into_iter()
            .map(|(a, b)| (ids[a].clone(), ids[b].clone()))
            .collect(),
        inputs,
        outputs,
        metadata,
    })
}

fn assign_ids(nodes: &[proto::NodeProto]) -> Vec<String> {
    let mut used = HashSet::new();
    let mut ids = Vec::with_capacity(nodes.len());
    for (idx, node) in nodes.iter().enumerate() {
        let base = if node.name.is_empty() {
            format!("{}_{idx}", node.op_type)
        } else {
            node.name.clone()
        };
        let mut id = base.clone();
        let mut n = 1;
        while !used.insert(id.clone()) {
            id = format!("{base}#{n}");
            n += 1;
        }
        ids.push(id);
    }
    ids
}

fn attribute_value(attr: &proto::AttributeProto, node_id: &str) -> Result<String> {
    let kind = if attr.r#type == at::UNDEFINED {
        infer_type(attr)
    } else {
        attr.r#type
    };
    let text = match kind {
        at::FLOAT => float32_repr(attr.f),
        at::INT => attr.i.to_string(),
        at::STRING => String::from_utf8_lossy(&attr.s).into_owned(),
        at::FLOATS => tuple(attr.floats.iter().map(|f| float32_repr(*f))),
        at::INTS => tuple(attr.ints.iter().map(i64::to_string)),
        at::STRINGS => tuple(
            attr.strings
                .iter()
                .map(|s| quoted(&String::from_utf8_lossy(s))),
        ),
        at::TENSOR => match &attr.t {
            Some(t) => format!("<tensor {}>", tuple(t.dims.iter().map(i64::to_string))),
            None => "<tensor>".to_string(),
        },
        at::GRAPH => match &attr.g {
            Some(g) => format!("<graph {}>", g.name),
            None => "<graph>".to_string(),
        },
        other => {
            return Err(Error::Ingest(format!(
                "node `{node_id}` attribute `{}` has unsupported type {other}",
                attr.name
            )))
        }
    };
    Ok(text)
}

// IR versions before 0.0.2 leave `type` unset.
fn infer_type(attr: &proto::AttributeProto) -> i32 {
    if !attr.ints.is_empty() {
        at::INTS
    } else if !attr.floats.is_empty() {
        at::FLOATS
    } else if !attr.strings.is_empty() {
        at::STRINGS
    } else if !attr.s.is_empty() {
        at::STRING
    } else if attr.t.is_some() {
        at::TENSOR
    } else if attr.g.is_some() {
        at::GRAPH
    } else if attr.f != 0.0 {
        at::FLOAT
    } else {
        at::INT
    }
}
