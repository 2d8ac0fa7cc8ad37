use std::sync::OnceLock;

use archaudit::audit::{audit_corpus, audit_model, AuditPolicy, Verdict};
use archaudit::corpus::{gen_corpus, inject_mislabels, CorpusSpec};
use archaudit::features::FeatureParts;
use archaudit::graph::{DeclaredMetadata, GraphDoc, LayerNode};
use archaudit::learner::TrainConfig;
use archaudit::pipeline::{featurize, train_bundle, Facet, ModelBundle};

fn corpus() -> &'static (Vec<GraphDoc>, ModelBundle) {
    static CELL: OnceLock<(Vec<GraphDoc>, ModelBundle)> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = CorpusSpec {
            families: 5,
            instances: 12,
            seed: 5,
            ..CorpusSpec::default()
        };
        let docs = gen_corpus(&spec).unwrap();
        let features: Vec<_> = docs.iter().map(|d| featurize(d, FeatureParts::LAndP).unwrap()).collect();
        let metas: Vec<_> = docs.iter().map(|d| &d.metadata).collect();
        let bundle = train_bundle(&features, &metas, FeatureParts::LAndP, &TrainConfig::default()).unwrap();
        (docs, bundle)
    })
}

fn unfamiliar_graph() -> GraphDoc {
    let ops = ["Mamba", "SelectiveScan", "RMSNorm", "Mamba", "SelectiveScan", "RMSNorm", "Mamba", "Rotary"];
    let nodes: Vec<LayerNode> = ops
        .iter()
        .enumerate()
        .map(|(i, op)| LayerNode::new(format!("n{i}"), *op).with_param("d_state", "16"))
        .collect();
    GraphDoc {
        edges: (1..nodes.len()).map(|i| (format!("n{}", i - 1), format!("n{i}"))).collect(),
        inputs: vec!["n0".into()],
        outputs: vec![format!("n{}", nodes.len() - 1)],
        nodes,
        metadata: DeclaredMetadata {
            identifier: "state-spaces/mamba-like".into(),
            model_type: Some("family00".into()),
            architecture: Some("Family00Model".into()),
            tasks: ["feature-extraction".to_string()].into(),
        },
    }
}

#[test]
fn mostly_unknown_features_abstain() {
    let (_, bundle) = corpus();
    let entry = audit_model(&unfamiliar_graph(), bundle, &AuditPolicy::default()).unwrap();
    assert!(entry.oov_ratio >= 0.9, "oov ratio {}", entry.oov_ratio);
    assert!(entry.facets.iter().all(|f| f.verdict == Verdict::Abstain));
}

#[test]
fn undeclared_facets_are_reported_as_such() {
    let (docs, bundle) = corpus();
    let mut doc = docs[0].clone();
    doc.metadata.model_type = None;
    doc.metadata.tasks.clear();
    let entry = audit_model(&doc, bundle, &AuditPolicy::default()).unwrap();
    assert_eq!(entry.verdict(Facet::ModelType), Some(Verdict::Undeclared));
    assert_eq!(entry.verdict(Facet::Task), Some(Verdict::Undeclared));
    assert_eq!(entry.verdict(Facet::Architecture), Some(Verdict::Consistent));
}

#[test]
fn clean_training_data_is_consistent() {
    let (docs, bundle) = corpus();
    let report = audit_corpus(docs, bundle, &AuditPolicy::default()).unwrap();
    assert_eq!(report.entries.len(), docs.len());
    assert_eq!(report.count(Verdict::Inconsistent), 0);
    assert!(report.entries.windows(2).all(|w| w[0].identifier <= w[1].identifier));
}

#[test]
fn raising_min_confidence_never_adds_inconsistencies() {
    let (docs, bundle) = corpus();
    let mut docs = docs.clone();
    inject_mislabels(&mut docs, Facet::ModelType, 0.2, 1);
    let mut previous = usize::MAX;
    for min_confidence in [0.0, 0.3, 0.5, 0.8, 0.9, 0.99, 1.0] {
        let policy = AuditPolicy {
            min_confidence,
            ..AuditPolicy::default()
        };
        let report = audit_corpus(&docs, bundle, &policy).unwrap();
        let n = report.count(Verdict::Inconsistent);
        assert!(n <= previous, "{n} > {previous} at {min_confidence}");
        for f in report.entries.iter().flat_map(|e| &e.facets) {
            if f.verdict == Verdict::Inconsistent {
                assert!(f.confidence >= min_confidence);
            }
        }
        previous = n;
    }
}

#[test]
fn facets_are_judged_independently() {
    let (docs, bundle) = corpus();
    let clean = audit_corpus(docs, bundle, &AuditPolicy::default()).unwrap();
    let mut docs = docs.clone();
    let changed = inject_mislabels(&mut docs, Facet::Architecture, 0.3, 2);
    assert!(!changed.is_empty());
    let dirty = audit_corpus(&docs, bundle, &AuditPolicy::default()).unwrap();
    for (a, b) in clean.entries.iter().zip(&dirty.entries) {
        assert_eq!(a.verdict(Facet::ModelType), b.verdict(Facet::ModelType));
        assert_eq!(a.verdict(Facet::Task), b.verdict(Facet::Task));
    }
    assert!(dirty.count(Verdict::Inconsistent) > 0);
}

#[test]
fn empty_corpus_gives_empty_report() {
    let (_, bundle) = corpus();
    let report = audit_corpus(&[], bundle, &AuditPolicy::default()).unwrap();
    assert!(report.entries.is_empty() && report.errors.is_empty());
    assert!(!report.has_inconsistency());
}

#[test]
fn invalid_policy_is_rejected() {
    let (docs, bundle) = corpus();
    let policy = AuditPolicy {
        min_confidence: 1.5,
        ..AuditPolicy::default()
    };
    assert!(audit_corpus(docs, bundle, &policy).is_err());
}
