//! Read a JSON graph document, report validation findings and print its
//! canonical form.
//!
//!     cargo run --example ingest_graph -- [graph.json]

use std::path::PathBuf;

use archaudit::graph::{serialize_graph_doc, validate_graph};
use archaudit::pipeline::load_graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mlp_block.json")));
    let doc = load_graph(&path)?;
    println!(
        "{}: {} layers, {} edges, inputs {:?}, outputs {:?}",
        doc.identifier(),
        doc.nodes.len(),
        doc.edges.len(),
        doc.inputs,
        doc.outputs
    );
    let report = validate_graph(&doc);
    if report.is_empty() {
        println!("no validation findings");
    }
    for finding in &report.findings {
        println!("finding: {finding}");
    }
    print!("{}", serialize_graph_doc(&doc));
    Ok(())
}
