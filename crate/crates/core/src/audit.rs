//! Comparing classifier predictions with declared metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{vectorize, FeatureParts, NgramFeature};
use crate::graph::{DeclaredMetadata, GraphDoc};
use crate::learner::metrics::fold_indices;
use crate::learner::TrainConfig;
use crate::pipeline::{featurize, train_bundle, Facet, ModelBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditPolicy {
    /// Mismatches below this probability are not flagged.
    pub min_confidence: f64,
    /// Window of ranked task predictions a declared task must appear in.
    pub task_k: usize,
    /// Abstain when more than this share of feature counts is unknown.
    pub oov_abstain_ratio: f64,
}

impl Default for AuditPolicy {
    fn default() -> Self {
        AuditPolicy {
            min_confidence: 0.8,
            task_k: 3,
            oov_abstain_ratio: 0.5,
        }
    }
}

impl AuditPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min_confidence must lie in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if self.task_k == 0 {
            return Err(Error::Config("task_k must be at least 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.oov_abstain_ratio) {
            return Err(Error::Config(format!(
                "oov_abstain_ratio must lie in [0, 1], got {}",
                self.oov_abstain_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Abstain,
    Undeclared,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Abstain => "abstain",
            Verdict::Undeclared => "undeclared",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetVerdict {
    pub facet: Facet,
    pub declared: Vec<String>,
    /// Ranked predictions: top-1 for single-label facets, top-k for task.
    pub predicted: Vec<Prediction>,
    pub confidence: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub identifier: String,
    pub oov_ratio: f64,
    pub facets: Vec<FacetVerdict>,
}

impl AuditEntry {
    pub fn verdict(&self, facet: Facet) -> Option<Verdict> {
        self.facets.iter().find(|f| f.facet == facet).map(|f| f.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditError {
    pub identifier: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub errors: Vec<AuditError>,
    /// Count of each verdict over all entries and facets.
    pub summary: BTreeMap<Verdict, usize>,
}

impl AuditReport {
    pub fn from_parts(mut entries: Vec<AuditEntry>, mut errors: Vec<AuditError>) -> Self {
        entries.sort_by(|a, b| a.identifier.cmp(&b.identifier));
        errors.sort_by(|a, b| a.identifier.cmp(&b.identifier).then(a.message.cmp(&b.message)));
        let mut summary = BTreeMap::new();
        for f in entries.iter().flat_map(|e| &e.facets) {
            *summary.entry(f.verdict).or_insert(0) += 1;
        }
        AuditReport {
            entries,
            errors,
            summary,
        }
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.summary.get(&verdict).copied().unwrap_or(0)
    }

    pub fn has_inconsistency(&self) -> bool {
        self.count(Verdict::Inconsistent) > 0
    }

    /// One tab-separated line per facet verdict, then one per error.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            for f in &e.facets {
                let predicted: Vec<String> = f
                    .predicted
                    .iter()
                    .map(|p| format!("{}:{:.4}", p.label, p.probability))
                    .collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\tdeclared={}\tpredicted={}\tconfidence={:.4}\n",
                    e.identifier,
                    f.facet,
                    f.verdict,
                    f.declared.join(","),
                    predicted.join(","),
                    f.confidence
                ));
            }
        }
        for err in &self.errors {
            out.push_str(&format!("{}\terror\t{}\n", err.identifier, err.message));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

fn declared_values(meta: &DeclaredMetadata, facet: Facet) -> Vec<String> {
    match facet {
        Facet::ModelType => meta.model_type.iter().cloned().collect(),
        Facet::Architecture => meta.architecture.iter().cloned().collect(),
        Facet::Task => meta.tasks.iter().cloned().collect(),
    }
}

/// Audit an already extracted feature against its declared metadata.
pub fn audit_feature(
    meta: &DeclaredMetadata,
    feature: &NgramFeature,
    bundle: &ModelBundle,
    policy: &AuditPolicy,
) -> Result<AuditEntry> {
    let vector = vectorize(feature, &bundle.vocab);
    let oov_ratio = vector.oov_ratio();
    let mut facets = Vec::new();
    for (&facet, model) in &bundle.models {
        let declared = declared_values(meta, facet);
        let k = if facet.is_multi_label() { policy.task_k } else { 1 };
        let ranked = model.predict_topk(&vector.values, k)?;
        let predicted: Vec<Prediction> = ranked
            .into_iter()
            .map(|(label, probability)| Prediction { label, probability })
            .collect();
        let confidence = predicted.first().map(|p| p.probability).unwrap_or(0.0);
        let agrees = predicted.iter().any(|p| declared.contains(&p.label));
        let verdict = if declared.is_empty() {
            Verdict::Undeclared
        } else if oov_ratio > policy.oov_abstain_ratio {
            Verdict::Abstain
        } else if agrees {
            Verdict::Consistent
        } else if confidence >= policy.min_confidence {
            Verdict::Inconsistent
        } else {
            Verdict::Abstain
        };
        facets.push(FacetVerdict {
            facet,
            declared,
            predicted,
            confidence,
            verdict,
        });
    }
    Ok(AuditEntry {
        identifier: meta.identifier.clone(),
        oov_ratio,
        facets,
    })
}

/// Run the full pipeline on one graph and judge every facet the bundle covers.
pub fn audit_model(doc: &GraphDoc, bundle: &ModelBundle, policy: &AuditPolicy) -> Result<AuditEntry> {
    bundle.check()?;
    policy.validate()?;
    let feature = featurize(doc, bundle.vocab.parts())?;
    audit_feature(&doc.metadata, &feature, bundle, policy)
}

/// Audit a batch in parallel. Per-model failures are collected in the
/// report; entries are ordered by identifier.
pub fn audit_corpus(docs: &[GraphDoc], bundle: &ModelBundle, policy: &AuditPolicy) -> Result<AuditReport> {
    bundle.check()?;
    policy.validate()?;
    let results: Vec<(String, Result<AuditEntry>)> = docs
        .par_iter()
        .map(|doc| {
            let id = doc.identifier().to_string();
            let entry = featurize(doc, bundle.vocab.parts())
                .and_then(|f| audit_feature(&doc.metadata, &f, bundle, policy));
            (id, entry)
        })
        .collect();
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (identifier, result) in results {
        match result {
            Ok(entry) => entries.push(entry),
            Err(e) => errors.push(AuditError {
                identifier,
                message: e.to_string(),
            }),
        }
    }
    Ok(AuditReport::from_parts(entries, errors))
}

/// Audit every document with classifiers that never saw it: the corpus is cut
/// into `folds` parts and each part is judged by a bundle trained on the rest.
pub fn cross_fit_audit(
    docs: &[GraphDoc],
    parts: FeatureParts,
    cfg: &TrainConfig,
    policy: &AuditPolicy,
    folds: usize,
) -> Result<AuditReport> {
    policy.validate()?;
    if folds < 2 || folds > docs.len() {
        return Err(Error::Config(format!(
            "cannot cross-fit {} documents over {folds} folds",
            docs.len()
        )));
    }
    let mut errors = Vec::new();
    let mut usable: Vec<(usize, NgramFeature)> = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        match featurize(doc, parts) {
            Ok(f) => usable.push((i, f)),
            Err(e) => errors.push(AuditError {
                identifier: doc.identifier().to_string(),
                message: e.to_string(),
            }),
        }
    }
    let mut entries = Vec::new();
    for held in fold_indices(usable.len(), folds, cfg.seed) {
        let held: BTreeSet<usize> = held.into_iter().collect();
        let (train_f, train_m): (Vec<NgramFeature>, Vec<&DeclaredMetadata>) = usable
            .iter()
            .enumerate()
            .filter(|(j, _)| !held.contains(j))
            .map(|(_, (i, f))| (f.clone(), &docs[*i].metadata))
            .unzip();
        let bundle = train_bundle(&train_f, &train_m, parts, cfg)?;
        let judged: Vec<Result<AuditEntry>> = held
            .par_iter()
            .map(|&j| {
                let (i, f) = &usable[j];
                audit_feature(&docs[*i].metadata, f, &bundle, policy)
            })
            .collect();
        for (j, result) in held.iter().zip(judged) {
            match result {
                Ok(entry) => entries.push(entry),
                Err(e) => errors.push(AuditError {
                    identifier: docs[usable[*j].0].identifier().to_string(),
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(AuditReport::from_parts(entries, errors))
}
