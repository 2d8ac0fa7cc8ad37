//! Inject mislabels into a synthetic corpus and audit it with classifiers
//! that never saw the judged models.
//!
//!     cargo run --release --example audit_metadata

use archaudit::audit::{cross_fit_audit, AuditPolicy, Verdict};
use archaudit::corpus::{gen_corpus, inject_mislabels, CorpusSpec};
use archaudit::features::FeatureParts;
use archaudit::learner::TrainConfig;
use archaudit::pipeline::Facet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut docs = gen_corpus(&CorpusSpec {
        families: 8,
        instances: 20,
        ..CorpusSpec::default()
    })?;
    let changed = inject_mislabels(&mut docs, Facet::ModelType, 0.05, 7);
    println!("relabelled {} models", changed.len());

    let report = cross_fit_audit(&docs, FeatureParts::LAndP, &TrainConfig::default(), &AuditPolicy::default(), 5)?;
    for (verdict, n) in &report.summary {
        println!("{verdict:<13} {n}");
    }
    for entry in &report.entries {
        if let Some(f) = entry.facets.iter().find(|f| f.verdict == Verdict::Inconsistent) {
            println!(
                "{}: {} declared {:?}, predicted {} ({:.2})",
                entry.identifier, f.facet, f.declared, f.predicted[0].label, f.confidence
            );
        }
    }
    Ok(())
}
