//! Structural n-gram features.
//!
//! Two families of counts are taken from an [`Aptm`]:
//!
//! * `l`: 2-grams over retained edges, keyed `(<from op>, <to op>)`, plus the
//!   sentinel pairs `([INPUT], <op>)` for every root and `(<op>, [OUTPUT])`
//!   for every output;
//! * `p`: 1-grams over layers, keyed by the full parameter signature
//!   `<Op> ['<k1, v1>', '<k2, v2>', ...]` in declaration order.
//!
//! Counts stay raw. A [`FeatureVocab`] fixes the column order and turns a
//! feature into a dense [`FeatureVector`]; keys outside the vocabulary are
//! counted as out-of-vocabulary instead of being dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_128;

use crate::aptm::{layer_sequence, Aptm, INPUT_TOKEN, OUTPUT_TOKEN};
use crate::error::{Error, Result};
use crate::graph::{DeclaredMetadata, LayerNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeatureParts {
    #[serde(rename = "l")]
    LOnly,
    #[default]
    #[serde(rename = "l+p")]
    LAndP,
}

impl fmt::Display for FeatureParts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureParts::LOnly => "l",
            FeatureParts::LAndP => "l+p",
        })
    }
}

impl FromStr for FeatureParts {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l" => Ok(FeatureParts::LOnly),
            "l+p" => Ok(FeatureParts::LAndP),
            other => Err(Error::Config(format!(
                "unknown feature parts `{other}` (expected `l` or `l+p`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramFeature {
    pub l: BTreeMap<String, u64>,
    #[serde(default)]
    pub p: BTreeMap<String, u64>,
}

impl NgramFeature {
    pub fn total(&self) -> u64 {
        self.l.values().sum::<u64>() + self.p.values().sum::<u64>()
    }

    /// Multiset union of two features.
    pub fn merged(&self, other: &NgramFeature) -> NgramFeature {
        let mut out = self.clone();
        for (k, v) in &other.l {
            *out.l.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.p {
            *out.p.entry(k.clone()).or_default() += v;
        }
        out
    }
}

pub fn connection_key(from: &str, to: &str) -> String {
    format!("({from}, {to})")
}

pub fn extract_ngrams(aptm: &Aptm, parts: FeatureParts) -> NgramFeature {
    let mut feature = NgramFeature::default();
    for (from, to) in aptm.edges() {
        let key = connection_key(&aptm.layers[from].op_type, &aptm.layers[to].op_type);
        *feature.l.entry(key).or_default() += 1;
    }
    for &root in &aptm.roots {
        let key = connection_key(INPUT_TOKEN, &aptm.layers[root].op_type);
        *feature.l.entry(key).or_default() += 1;
    }
    for &out in &aptm.outputs {
        let key = connection_key(&aptm.layers[out].op_type, OUTPUT_TOKEN);
        *feature.l.entry(key).or_default() += 1;
    }
    if parts == FeatureParts::LAndP {
        for layer in &aptm.layers {
            let signature = LayerNode {
                id: String::new(),
                op_type: layer.op_type.clone(),
                params: layer.params.clone(),
            }
            .signature();
            *feature.p.entry(signature).or_default() += 1;
        }
    }
    feature
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVocab {
    parts: FeatureParts,
    l_keys: Vec<String>,
    p_keys: Vec<String>,
    l_index: HashMap<String, usize>,
    p_index: HashMap<String, usize>,
}

const VOCAB_MAGIC: &str = "archaudit-vocab";
const VOCAB_VERSION: u32 = 1;

impl FeatureVocab {
    fn from_keys(parts: FeatureParts, l_keys: Vec<String>, p_keys: Vec<String>) -> Result<Self> {
        let l_index: HashMap<String, usize> =
            l_keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let p_index: HashMap<String, usize> = p_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), l_keys.len() + i))
            .collect();
        if l_index.len() != l_keys.len() || p_index.len() != p_keys.len() {
            return Err(Error::Format {
                what: "vocabulary",
                message: "duplicate key".to_string(),
            });
        }
        Ok(FeatureVocab {
            parts,
            l_keys,
            p_keys,
            l_index,
            p_index,
        })
    }

    pub fn parts(&self) -> FeatureParts {
        self.parts
    }

    pub fn l_keys(&self) -> &[String] {
        &self.l_keys
    }

    pub fn p_keys(&self) -> &[String] {
        &self.p_keys
    }

    pub fn len(&self) -> usize {
        self.l_keys.len() + self.p_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column of a key, `l` keys first.
    pub fn position(&self, key: &str) -> Option<usize> {
        self.l_index
            .get(key)
            .or_else(|| self.p_index.get(key))
            .copied()
    }

    pub fn key(&self, column: usize) -> Option<&str> {
        if column < self.l_keys.len() {
            Some(&self.l_keys[column])
        } else {
            self.p_keys.get(column - self.l_keys.len()).map(String::as_str)
        }
    }

    /// Persisted form: a version header then one `l`/`p` line per key, the
    /// key written as a JSON string.
    pub fn to_text(&self) -> String {
        let mut out = format!("{VOCAB_MAGIC} {VOCAB_VERSION} {}\n", self.parts);
        for key in &self.l_keys {
            out.push_str("l ");
            out.push_str(&serde_json::to_string(key).expect("string serializes"));
            out.push('\n');
        }
        for key in &self.p_keys {
            out.push_str("p ");
            out.push_str(&serde_json::to_string(key).expect("string serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "vocabulary",
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != VOCAB_MAGIC {
            return Err(bad(format!("bad header `{header}`")));
        }
        if fields[1] != VOCAB_VERSION.to_string() {
            return Err(bad(format!("unsupported version {}", fields[1])));
        }
        let parts: FeatureParts = fields[2].parse()?;
        let mut l_keys = Vec::new();
        let mut p_keys = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (kind, key) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("line {}: missing key", n + 2)))?;
            let key: String = serde_json::from_str(key)
                .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
            match kind {
                "l" => l_keys.push(key),
                "p" => p_keys.push(key),
                other => return Err(bad(format!("line {}: unknown section `{other}`", n + 2))),
            }
        }
        Self::from_keys(parts, l_keys, p_keys)
    }

    /// Stable fingerprint used to tie trained models to this vocabulary.
    pub fn fingerprint(&self) -> u128 {
        xxh3_128(self.to_text().as_bytes())
    }
}

/// Union of all keys, most frequent first, ties lexicographic.
pub fn build_vocab(features: &[NgramFeature], parts: FeatureParts) -> Result<FeatureVocab> {
    if features.is_empty() {
        return Err(Error::Contract(
            "cannot build a vocabulary from an empty collection".to_string(),
        ));
    }
    fn ranked<'a>(maps: impl Iterator<Item = &'a BTreeMap<String, u64>>) -> Vec<String> {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for map in maps {
            for (k, v) in map {
                *totals.entry(k).or_default() += v;
            }
        }
        let mut keys: Vec<(&str, u64)> = totals.into_iter().collect();
        keys.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        keys.into_iter().map(|(k, _)| k.to_string()).collect()
    }
    let l_keys = ranked(features.iter().map(|f| &f.l));
    let p_keys = match parts {
        FeatureParts::LOnly => Vec::new(),
        FeatureParts::LAndP => ranked(features.iter().map(|f| &f.p)),
    };
    FeatureVocab::from_keys(parts, l_keys, p_keys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub oov_l: u64,
    pub oov_p: u64,
}

impl FeatureVector {
    pub fn oov(&self) -> u64 {
        self.oov_l + self.oov_p
    }

    /// Out-of-vocabulary share of all counted keys; 0 for an empty feature.
    pub fn oov_ratio(&self) -> f64 {
        let known: f64 = self.values.iter().sum();
        let total = known + self.oov() as f64;
        if total == 0.0 {
            0.0
        } else {
            self.oov() as f64 / total
        }
    }
}

pub fn vectorize(feature: &NgramFeature, vocab: &FeatureVocab) -> FeatureVector {
    let mut values = vec![0.0; vocab.len()];
    let mut oov_l = 0;
    let mut oov_p = 0;
    for (key, &count) in &feature.l {
        match vocab.l_index.get(key) {
            Some(&i) => values[i] += count as f64,
            None => oov_l += count,
        }
    }
    for (key, &count) in &feature.p {
        match vocab.p_index.get(key) {
            Some(&i) => values[i] += count as f64,
            None => oov_p += count,
        }
    }
    FeatureVector {
        values,
        oov_l,
        oov_p,
    }
}

/// `{"l": {...}, "p": {...}}`, keys sorted, two-space indentation.
pub fn export_feature_json(feature: &NgramFeature) -> String {
    let mut text = serde_json::to_string_pretty(feature).expect("feature serializes");
    text.push('\n');
    text
}

pub fn import_feature_json(text: &str) -> Result<NgramFeature> {
    let feature: NgramFeature = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    if let Some(key) = feature
        .l
        .iter()
        .chain(feature.p.iter())
        .find(|(_, &v)| v == 0)
        .map(|(k, _)| k)
    {
        return Err(Error::Format {
            what: "feature document",
            message: format!("zero count for `{key}`"),
        });
    }
    Ok(feature)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    pub layers: String,
    pub model_type: Option<String>,
    pub arch: Option<String>,
    pub task: Vec<String>,
}

/// `{"<identifier>": {"layers", "model_type", "arch", "task"}}`.
pub fn export_sequence_json(aptm: &Aptm, meta: &DeclaredMetadata) -> String {
    let record = SequenceRecord {
        layers: layer_sequence(aptm).join(" "),
        model_type: meta.model_type.clone(),
        arch: meta.architecture.clone(),
        task: meta.tasks.iter().cloned().collect(),
    };
    let mut doc = BTreeMap::new();
    doc.insert(meta.identifier.clone(), record);
    let mut text = serde_json::to_string_pretty(&doc).expect("sequence serializes");
    text.push('\n');
    text
}

pub fn import_sequence_json(text: &str) -> Result<(String, SequenceRecord)> {
    let doc: BTreeMap<String, SequenceRecord> =
        serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
    let mut entries = doc.into_iter();
    match (entries.next(), entries.next()) {
        (Some(entry), None) => Ok(entry),
        _ => Err(Error::Format {
            what: "sequence document",
            message: "expected exactly one model entry".to_string(),
        }),
    }
}

/// Sorted set of `l` keys; handy for comparing structural families.
pub fn connection_key_set(feature: &NgramFeature) -> BTreeSet<&str> {
    feature.l.keys().map(String::as_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aptm::build_aptm;
    use crate::graph::{GraphDoc, LayerNode};

    fn single_conv() -> GraphDoc {
        GraphDoc {
            nodes: vec![LayerNode::new("c", "Conv2d")],
            inputs: vec!["c".into()],
            outputs: vec!["c".into()],
            ..Default::default()
        }
    }

    fn feat(l: &[(&str, u64)], p: &[(&str, u64)]) -> NgramFeature {
        NgramFeature {
            l: l.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            p: p.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn sentinel_pairs_for_single_layer() {
        let aptm = build_aptm(&single_conv()).unwrap();
        let f = extract_ngrams(&aptm, FeatureParts::LOnly);
        assert_eq!(f, feat(&[("([INPUT], Conv2d)", 1), ("(Conv2d, [OUTPUT])", 1)], &[]));
    }

    #[test]
    fn repeated_edges_are_counted() {
        let g = GraphDoc {
            nodes: vec![
                LayerNode::new("c1", "Conv2d"),
                LayerNode::new("r1", "Relu"),
                LayerNode::new("c2", "Conv2d"),
                LayerNode::new("r2", "Relu"),
            ],
            edges: vec![
                ("c1".into(), "r1".into()),
                ("r1".into(), "c2".into()),
                ("c2".into(), "r2".into()),
            ],
            inputs: vec!["c1".into()],
            outputs: vec!["r2".into()],
            ..Default::default()
        };
        let f = extract_ngrams(&build_aptm(&g).unwrap(), FeatureParts::LAndP);
        assert_eq!(f.l["(Conv2d, Relu)"], 2);
        assert_eq!(f.l["(Relu, Conv2d)"], 1);
        assert_eq!(f.p["Conv2d []"], 2);
        // 3 edges + 1 input sentinel + 1 output sentinel
        assert_eq!(f.l.values().sum::<u64>(), 5);
    }

    #[test]
    fn vocab_sizes() {
        let a = feat(&[("(A, B)", 1), ("(B, C)", 3)], &[]);
        assert_eq!(build_vocab(std::slice::from_ref(&a), FeatureParts::LOnly).unwrap().len(), 2);
        let b = feat(&[("(A, B)", 2), ("(C, D)", 1)], &[]);
        let v = build_vocab(&[a, b], FeatureParts::LOnly).unwrap();
        assert_eq!(v.l_keys(), ["(A, B)", "(B, C)", "(C, D)"]);
        assert!(build_vocab(&[], FeatureParts::LOnly).is_err());
    }

    #[test]
    fn vectorize_contract() {
        let v = build_vocab(&[feat(&[("(A, B)", 1)], &[("A []", 1)])], FeatureParts::LAndP).unwrap();
        let empty = vectorize(&NgramFeature::default(), &v);
        assert_eq!(empty.values, vec![0.0, 0.0]);
        assert_eq!(empty.oov(), 0);
        let unseen = vectorize(&feat(&[("(X, Y)", 1)], &[]), &v);
        assert_eq!(unseen.values, vec![0.0, 0.0]);
        assert_eq!(unseen.oov_l, 1);
        assert_eq!(unseen.oov_ratio(), 1.0);
    }

    #[test]
    fn vocab_text_round_trip() {
        let v = build_vocab(
            &[feat(&[("(A, B)", 1), ("(\"q\", B)", 2)], &[("A ['<k, v>']", 1)])],
            FeatureParts::LAndP,
        )
        .unwrap();
        let back = FeatureVocab::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert!(FeatureVocab::from_text("nonsense 1 l\n").is_err());
        assert!(FeatureVocab::from_text("archaudit-vocab 2 l\n").is_err());
    }

    #[test]
    fn feature_json_round_trips() {
        for f in [
            NgramFeature::default(),
            feat(&[("([INPUT], Conv2d)", 1)], &[]),
            feat(&[("(LayerNorm, Linear)", 259)], &[("Linear ['<in_features, 4096>']", 128)]),
        ] {
            assert_eq!(import_feature_json(&export_feature_json(&f)).unwrap(), f);
        }
        assert!(import_feature_json(r#"{"l": {"(A, B)": 0}, "p": {}}"#).is_err());
    }

    #[test]
    fn sequence_export_shape() {
        let aptm = build_aptm(&single_conv()).unwrap();
        let meta = DeclaredMetadata {
            identifier: "org/m".into(),
            model_type: Some("conv".into()),
            architecture: Some("ConvNet".into()),
            tasks: ["image-classification".to_string()].into_iter().collect(),
        };
        let text = export_sequence_json(&aptm, &meta);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let record = &value["org/m"];
        assert_eq!(record["layers"], "[INPUT] Conv2d [OUTPUT]");
        assert_eq!(record["model_type"], "conv");
        assert_eq!(record["arch"], "ConvNet");
        assert_eq!(record["task"][0], "image-classification");
        let (id, back) = import_sequence_json(&text).unwrap();
        assert_eq!(id, "org/m");
        assert_eq!(back.layers, "[INPUT] Conv2d [OUTPUT]");
    }
}
