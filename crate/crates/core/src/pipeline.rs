//! Glue between graph documents, features and per-facet classifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::aptm::build_aptm;
use crate::error::{Error, Result};
use crate::features::{build_vocab, extract_ngrams, vectorize, FeatureParts, FeatureVocab, NgramFeature};
use crate::graph::onnx::from_onnx_file;
use crate::graph::{parse_graph_doc, serialize_graph_doc, DeclaredMetadata, GraphDoc};
use crate::learner::{load_model, save_model, train, LabeledDataset, LossMode, MlpModel, Target, TrainConfig};

/// A declared metadata field the classifiers predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    ModelType,
    Architecture,
    Task,
}

impl Facet {
    pub const ALL: [Facet; 3] = [Facet::ModelType, Facet::Architecture, Facet::Task];

    pub fn name(self) -> &'static str {
        match self {
            Facet::ModelType => "model_type",
            Facet::Architecture => "architecture",
            Facet::Task => "task",
        }
    }

    pub fn is_multi_label(self) -> bool {
        self == Facet::Task
    }

    /// The declared value as a training target, if the facet is declared.
    pub fn target(self, meta: &DeclaredMetadata) -> Option<Target> {
        match self {
            Facet::ModelType => meta.model_type.clone().map(Target::Single),
            Facet::Architecture => meta.architecture.clone().map(Target::Single),
            Facet::Task => (!meta.tasks.is_empty()).then(|| Target::Multi(meta.tasks.clone())),
        }
    }

    /// Loss mode for this facet given the configured one: contrastive
    /// configs stay contrastive, and the label arity follows the facet.
    pub fn loss_mode(self, configured: LossMode) -> LossMode {
        match (self.is_multi_label(), configured.is_contrastive()) {
            (false, false) => LossMode::Ce,
            (false, true) => LossMode::JointSupcon,
            (true, false) => LossMode::Bce,
            (true, true) => LossMode::JointMultisupcon,
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Facet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Facet::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown facet `{s}`")))
    }
}

/// Load a graph from an `.onnx` model or a JSON graph document.
pub fn load_graph(path: &Path) -> Result<GraphDoc> {
    let is_onnx = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("onnx"));
    if is_onnx {
        from_onnx_file(path)
    } else {
        parse_graph_doc(&fs::read_to_string(path)?)
    }
}

/// Expand directories into their `.json` and `.onnx` files (sorted, not
/// recursive); plain file arguments are kept in order.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "json" | "onnx"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

/// File name for a document inside a corpus directory.
pub fn doc_file_name(doc: &GraphDoc) -> String {
    let stem: String = doc
        .identifier()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{stem}.json")
}

/// Write every document as `<identifier>.json` under `dir`.
pub fn write_corpus(docs: &[GraphDoc], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(docs.len());
    for doc in docs {
        let path = dir.join(doc_file_name(doc));
        fs::write(&path, serialize_graph_doc(doc))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Seeded shuffle of `0..n` cut into `(train, held_out)` at `train_fraction`.
pub fn holdout_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * train_fraction).round() as usize;
    let held = order.split_off(cut.min(n));
    (order, held)
}

/// Graph document to raw n-gram counts.
pub fn featurize(doc: &GraphDoc, parts: FeatureParts) -> Result<NgramFeature> {
    Ok(extract_ngrams(&build_aptm(doc)?, parts))
}

/// Rows for one facet; entries that do not declare the facet are skipped.
pub fn facet_dataset(
    features: &[NgramFeature],
    metas: &[&DeclaredMetadata],
    vocab: &FeatureVocab,
    facet: Facet,
) -> Result<LabeledDataset> {
    let rows = features
        .iter()
        .zip(metas)
        .filter_map(|(f, m)| facet.target(m).map(|t| (vectorize(f, vocab).values, t)))
        .collect();
    LabeledDataset::new(rows)
}

/// A vocabulary and the classifiers trained against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub vocab: FeatureVocab,
    pub models: BTreeMap<Facet, MlpModel>,
}

const VOCAB_FILE: &str = "vocab.txt";

impl ModelBundle {
    /// Every model must have been trained on exactly this vocabulary.
    pub fn check(&self) -> Result<()> {
        let fingerprint = self.vocab.fingerprint();
        for (facet, model) in &self.models {
            if model.vocab_fingerprint() != fingerprint {
                return Err(Error::Compatibility(format!(
                    "{facet} model was trained on vocabulary {:032x}, bundle vocabulary is {fingerprint:032x}",
                    model.vocab_fingerprint()
                )));
            }
            if model.input_dim() != self.vocab.len() {
                return Err(Error::Compatibility(format!(
                    "{facet} model expects {} features, vocabulary has {}",
                    model.input_dim(),
                    self.vocab.len()
                )));
            }
        }
        Ok(())
    }

    /// Directory layout: `vocab.txt` plus `<facet>.mlp` per trained facet.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(VOCAB_FILE), self.vocab.to_text())?;
        for (facet, model) in &self.models {
            save_model(model, &dir.join(format!("{facet}.mlp")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ModelBundle> {
        let vocab = FeatureVocab::from_text(&fs::read_to_string(dir.join(VOCAB_FILE))?)?;
        let mut models = BTreeMap::new();
        for facet in Facet::ALL {
            let path = dir.join(format!("{facet}.mlp"));
            if path.exists() {
                models.insert(facet, load_model(&path)?);
            }
        }
        let bundle = ModelBundle { vocab, models };
        bundle.check()?;
        Ok(bundle)
    }
}

/// Build a vocabulary over `features` and train one classifier per facet
/// that has at least one declared value.
pub fn train_bundle(
    features: &[NgramFeature],
    metas: &[&DeclaredMetadata],
    parts: FeatureParts,
    cfg: &TrainConfig,
) -> Result<ModelBundle> {
    if features.len() != metas.len() {
        return Err(Error::Shape {
            expected: features.len(),
            got: metas.len(),
        });
    }
    let vocab = build_vocab(features, parts)?;
    let mut models = BTreeMap::new();
    for facet in Facet::ALL {
        let ds = facet_dataset(features, metas, &vocab, facet)?;
        if ds.is_empty() {
            continue;
        }
        let facet_cfg = TrainConfig {
            loss_mode: facet.loss_mode(cfg.loss_mode),
            ..cfg.clone()
        };
        let (mut model, _) = train(&ds, &facet_cfg)?;
        model.set_vocab_fingerprint(vocab.fingerprint());
        models.insert(facet, model);
    }
    Ok(ModelBundle { vocab, models })
}

/// Ranked `(label, probability)` predictions of every facet model.
pub fn predict_feature(
    bundle: &ModelBundle,
    feature: &NgramFeature,
    k: usize,
) -> Result<BTreeMap<Facet, Vec<(String, f64)>>> {
    let vector = vectorize(feature, &bundle.vocab);
    bundle
        .models
        .iter()
        .map(|(&facet, model)| Ok((facet, model.predict_topk(&vector.values, k)?)))
        .collect()
}

/// Per-facet metrics of a bundle on labelled features.
pub fn evaluate_bundle(
    bundle: &ModelBundle,
    features: &[NgramFeature],
    metas: &[&DeclaredMetadata],
) -> Result<BTreeMap<Facet, crate::learner::Metrics>> {
    let mut out = BTreeMap::new();
    for (&facet, model) in &bundle.models {
        let ds = facet_dataset(features, metas, &bundle.vocab, facet)?;
        out.insert(facet, crate::learner::evaluate(model, &ds)?);
    }
    Ok(out)
}
