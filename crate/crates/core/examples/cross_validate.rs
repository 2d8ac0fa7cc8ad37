//! Five-fold cross-validation of the model_type classifier on a synthetic
//! corpus.
//!
//!     cargo run --release --example cross_validate -- [families] [instances] [adam|sgd]

use std::time::Instant;

use archaudit::corpus::{gen_corpus, CorpusSpec};
use archaudit::features::{build_vocab, FeatureParts};
use archaudit::learner::{kfold, Optimizer, TrainConfig};
use archaudit::pipeline::{facet_dataset, featurize, Facet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let families = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let instances = args.next().map(|a| a.parse()).transpose()?.unwrap_or(30);
    let optimizer = match args.next().as_deref() {
        Some("sgd") => Optimizer::Sgd,
        _ => Optimizer::Adam,
    };

    let docs = gen_corpus(&CorpusSpec {
        families,
        instances,
        ..CorpusSpec::default()
    })?;
    let parts = FeatureParts::LAndP;
    let features = docs
        .iter()
        .map(|d| featurize(d, parts))
        .collect::<Result<Vec<_>, _>>()?;
    let metas: Vec<_> = docs.iter().map(|d| &d.metadata).collect();
    let vocab = build_vocab(&features, parts)?;
    let ds = facet_dataset(&features, &metas, &vocab, Facet::ModelType)?;
    println!("{} graphs, {} features", ds.len(), vocab.len());

    let start = Instant::now();
    let report = kfold(&ds, &TrainConfig { optimizer, ..TrainConfig::default() }, 5)?;
    for (i, fold) in report.folds.iter().enumerate() {
        println!("fold {i}: accuracy {:.4}  macro F1 {:.4}", fold.scores.accuracy, fold.scores.f1);
    }
    println!(
        "accuracy {:.1} ± {:.1}  macro F1 {:.1} ± {:.1}  ({:.1?})",
        100.0 * report.mean.accuracy,
        100.0 * report.std.accuracy,
        100.0 * report.mean.f1,
        100.0 * report.std.f1,
        start.elapsed()
    );
    Ok(())
}
