//! Per-stage latency and throughput on a synthetic corpus.
//!
//!     cargo run --release --example bench_stages -- [reps]

use archaudit::bench::{bench, timings_table};
use archaudit::corpus::{gen_corpus, CorpusSpec};
use archaudit::features::FeatureParts;
use archaudit::graph::serialize_graph_doc;
use archaudit::learner::TrainConfig;
use archaudit::pipeline::{featurize, train_bundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(5);
    let docs = gen_corpus(&CorpusSpec {
        families: 10,
        instances: 20,
        ..CorpusSpec::default()
    })?;
    let features = docs.iter().map(|d| featurize(d, FeatureParts::LAndP)).collect::<Result<Vec<_>, _>>()?;
    let metas: Vec<_> = docs.iter().map(|d| &d.metadata).collect();
    let bundle = train_bundle(&features, &metas, FeatureParts::LAndP, &TrainConfig::default())?;
    let sources: Vec<String> = docs.iter().map(serialize_graph_doc).collect();
    print!("{}", timings_table(&bench(&sources, &bundle, reps)?));
    Ok(())
}
