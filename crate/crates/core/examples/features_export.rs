//! N-gram features of a graph: the `l`/`p` document, the layer-sequence
//! record, and a vocabulary-aligned count vector.
//!
//!     cargo run --example features_export -- [graph.json]

use std::path::PathBuf;

use archaudit::aptm::build_aptm;
use archaudit::features::{build_vocab, export_feature_json, export_sequence_json, extract_ngrams, vectorize, FeatureParts};
use archaudit::pipeline::load_graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/vit_stem.json")));
    let doc = load_graph(&path)?;
    let aptm = build_aptm(&doc)?;

    let feature = extract_ngrams(&aptm, FeatureParts::LAndP);
    print!("{}", export_feature_json(&feature));
    print!("{}", export_sequence_json(&aptm, &doc.metadata));

    // A vocabulary over this one graph; any other graph's unseen keys would
    // count as out-of-vocabulary.
    let vocab = build_vocab(std::slice::from_ref(&feature), FeatureParts::LAndP)?;
    let vector = vectorize(&feature, &vocab);
    println!("vocabulary fingerprint {:032x}, {} columns", vocab.fingerprint(), vocab.len());
    for (column, value) in vector.values.iter().enumerate() {
        println!("  {value:>3}  {}", vocab.key(column).unwrap_or("?"));
    }
    println!("out of vocabulary: {}", vector.oov());
    Ok(())
}
