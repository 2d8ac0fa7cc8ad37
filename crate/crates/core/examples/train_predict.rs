//! Train per-facet classifiers on a synthetic corpus, evaluate on a held-out
//! split, save the bundle and predict with the reloaded copy.
//!
//!     cargo run --release --example train_predict

use archaudit::corpus::{gen_corpus, CorpusSpec};
use archaudit::features::FeatureParts;
use archaudit::learner::TrainConfig;
use archaudit::pipeline::{evaluate_bundle, featurize, holdout_split, predict_feature, train_bundle, ModelBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs = gen_corpus(&CorpusSpec {
        families: 8,
        instances: 20,
        ..CorpusSpec::default()
    })?;
    let parts = FeatureParts::LAndP;
    let features = docs.iter().map(|d| featurize(d, parts)).collect::<Result<Vec<_>, _>>()?;
    let (train_idx, held_idx) = holdout_split(docs.len(), 0.8, 0);
    let pick = |idx: &[usize]| {
        (
            idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>(),
            idx.iter().map(|&i| &docs[i].metadata).collect::<Vec<_>>(),
        )
    };

    let (train_f, train_m) = pick(&train_idx);
    let bundle = train_bundle(&train_f, &train_m, parts, &TrainConfig::default())?;
    let (held_f, held_m) = pick(&held_idx);
    for (facet, m) in evaluate_bundle(&bundle, &held_f, &held_m)? {
        println!(
            "{facet:<12} acc {:.3}  P {:.3}  R {:.3}  F1 {:.3}  top@k {:?}",
            m.scores.accuracy, m.scores.precision, m.scores.recall, m.scores.f1, m.scores.top_k
        );
    }

    let dir = std::env::temp_dir().join("archaudit-example-bundle");
    bundle.save(&dir)?;
    let reloaded = ModelBundle::load(&dir)?;
    let i = held_idx[0];
    println!("{} declares {:?}", docs[i].identifier(), docs[i].metadata.model_type);
    for (facet, ranked) in predict_feature(&reloaded, &features[i], 3)? {
        println!("  {facet}: {ranked:?}");
    }
    Ok(())
}
