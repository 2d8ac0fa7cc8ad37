//! Build a small ONNX model in memory, encode it, and read it back through
//! the ONNX adapter.
//!
//!     cargo run --example onnx_ingest

use archaudit::aptm::build_aptm;
use archaudit::features::{export_feature_json, extract_ngrams, FeatureParts};
use archaudit::graph::onnx::from_onnx;
use archaudit::graph::onnx::proto::{
    attribute_type, AttributeProto, GraphProto, ModelProto, NodeProto, StringStringEntryProto, TensorProto,
    ValueInfoProto,
};
use prost::Message;

fn node(name: &str, op: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.to_string()],
        name: name.to_string(),
        op_type: op.to_string(),
        attribute,
        domain: String::new(),
    }
}

fn ints(name: &str, values: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.to_string(),
        ints: values.to_vec(),
        r#type: attribute_type::INTS,
        ..Default::default()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let weight = |name: &str| TensorProto {
        dims: vec![64, 3, 3, 3],
        name: name.to_string(),
    };
    let graph = GraphProto {
        name: "tiny-cnn".to_string(),
        node: vec![
            node("conv", "Conv", &["pixels", "w0"], "c", vec![ints("kernel_shape", &[3, 3]), ints("strides", &[1, 1])]),
            node("relu", "Relu", &["c"], "r", vec![]),
            node("pool", "GlobalAveragePool", &["r"], "p", vec![]),
            node("skip", "Identity", &["c"], "s", vec![]),
            node("sum", "Add", &["p", "s"], "logits", vec![]),
        ],
        initializer: vec![weight("w0")],
        input: vec![ValueInfoProto { name: "pixels".into() }],
        output: vec![ValueInfoProto { name: "logits".into() }],
        ..Default::default()
    };
    let model = ModelProto {
        ir_version: 9,
        producer_name: "example".to_string(),
        graph: Some(graph),
        metadata_props: vec![
            StringStringEntryProto { key: "identifier".into(), value: "example/tiny-cnn".into() },
            StringStringEntryProto { key: "model_type".into(), value: "resnet".into() },
            StringStringEntryProto { key: "tasks".into(), value: "image-classification".into() },
        ],
    };
    let bytes = model.encode_to_vec();
    println!("encoded {} bytes of ONNX", bytes.len());

    let doc = from_onnx(&bytes)?;
    for n in &doc.nodes {
        println!("  {} {:?}", n.id, n.signature());
    }
    println!("edges: {:?}", doc.edges);
    let aptm = build_aptm(&doc)?;
    print!("{}", export_feature_json(&extract_ngrams(&aptm, FeatureParts::LAndP)));
    Ok(())
}
