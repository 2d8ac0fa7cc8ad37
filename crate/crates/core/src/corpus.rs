//! Seeded synthetic model corpora.
//!
//! Each family owns a block template drawn from an op palette: a short chain
//! of layers, optionally split into two parallel branches and optionally
//! wrapped in a residual connection. Instances of a family stack a varying
//! number of blocks at a varying width and end in one of a few task heads.
//! Families are redrawn until their connection key sets differ.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DeclaredMetadata, GraphDoc, LayerNode};
use crate::features::FeatureParts;
use crate::pipeline::{featurize, Facet};

const PALETTE: [&str; 16] = [
    "Conv2d",
    "Conv1d",
    "Linear",
    "LayerNorm",
    "BatchNorm2d",
    "ReLU",
    "GELU",
    "SiLU",
    "Tanh",
    "Sigmoid",
    "Dropout",
    "MaxPool2d",
    "AvgPool2d",
    "MultiheadAttention",
    "LSTM",
    "GRU",
];

const STEMS: [&str; 3] = ["Embedding", "Conv2d", "Linear"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeadKind {
    name: &'static str,
    ops: &'static [&'static str],
    tasks: &'static [&'static str],
}

const HEADS: [HeadKind; 4] = [
    HeadKind {
        name: "ForSequenceClassification",
        ops: &["AdaptiveAvgPool1d", "Linear"],
        tasks: &["text-classification", "sentiment-analysis", "zero-shot-classification"],
    },
    HeadKind {
        name: "ForTokenClassification",
        ops: &["Dropout", "Linear"],
        tasks: &["token-classification", "ner"],
    },
    HeadKind {
        name: "ForQuestionAnswering",
        ops: &["Linear", "Split"],
        tasks: &["question-answering", "extractive-qa"],
    },
    HeadKind {
        name: "Model",
        ops: &["LayerNorm"],
        tasks: &["feature-extraction", "sentence-similarity"],
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub families: usize,
    pub instances: usize,
    pub seed: u64,
    /// Inclusive range of stacked blocks per instance.
    pub min_blocks: usize,
    pub max_blocks: usize,
    /// Inclusive range of ops per block.
    pub min_block_ops: usize,
    pub max_block_ops: usize,
    /// Probability that a family's blocks split into two parallel branches.
    pub branch_probability: f64,
    pub widths: Vec<usize>,
    /// Number of task heads used (1 to 4).
    pub heads: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            families: 20,
            instances: 30,
            seed: 0,
            min_blocks: 2,
            max_blocks: 6,
            min_block_ops: 3,
            max_block_ops: 5,
            branch_probability: 0.4,
            widths: vec![64, 128, 256, 512, 768, 1024],
            heads: 4,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.families < 2 {
            return bad("a corpus needs at least 2 families");
        }
        if self.instances < 2 {
            return bad("each family needs at least 2 instances");
        }
        if self.min_blocks == 0 || self.min_blocks > self.max_blocks {
            return bad("block range must be non-empty and start at 1 or more");
        }
        if self.min_block_ops < 2 || self.min_block_ops > self.max_block_ops {
            return bad("block op range must be non-empty and start at 2 or more");
        }
        if self.max_block_ops > PALETTE.len() {
            return bad("blocks cannot be longer than the op palette");
        }
        if !(0.0..=1.0).contains(&self.branch_probability) {
            return bad("branch_probability must lie in [0, 1]");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive");
        }
        if self.heads == 0 || self.heads > HEADS.len() {
            return bad("heads must lie in 1..=4");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTemplate {
    pub name: String,
    pub stem: String,
    /// First branch of the block; also the only one for unbranched families.
    pub block: Vec<String>,
    /// Second parallel branch, joined with the first by `Add`.
    pub branch: Option<Vec<String>>,
    pub residual: bool,
    pub kernel: usize,
}

impl FamilyTemplate {
    pub fn model_type(&self) -> String {
        self.name.clone()
    }

    fn class_name(&self) -> String {
        let mut chars = self.name.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }

    /// Union of connection keys over every head this spec uses. Widths do
    /// not change connection keys, and any stack of two or more blocks has the
    /// same key set, so one probe per head covers the whole family.
    pub fn connection_keys(&self, spec: &CorpusSpec) -> BTreeSet<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut keys = BTreeSet::new();
        let stacks: BTreeSet<usize> = [spec.min_blocks, spec.max_blocks.min(spec.min_blocks.max(2))]
            .into_iter()
            .collect();
        for head in &HEADS[..spec.heads] {
            for &blocks in &stacks {
                let doc = instance(self, *head, 0, blocks, spec, &mut rng);
                let feature = featurize(&doc, FeatureParts::LOnly).expect("generated graphs are valid");
                keys.extend(feature.l.into_keys());
            }
        }
        keys
    }
}

fn draw_chain(rng: &mut ChaCha8Rng, spec: &CorpusSpec) -> Vec<String> {
    let len = rng.gen_range(spec.min_block_ops..=spec.max_block_ops);
    let mut ops: Vec<String> = Vec::with_capacity(len);
    while ops.len() < len {
        let op = *PALETTE.choose(rng).expect("palette is non-empty");
        if ops.last().map(String::as_str) != Some(op) {
            ops.push(op.to_string());
        }
    }
    ops
}

/// Draw one template per family, redrawing until connection key sets differ.
pub fn family_templates(spec: &CorpusSpec) -> Result<Vec<FamilyTemplate>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen: HashSet<BTreeSet<String>> = HashSet::new();
    let mut out = Vec::with_capacity(spec.families);
    const MAX_ATTEMPTS: usize = 1000;
    for f in 0..spec.families {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(Error::Config(format!(
                    "could not draw {} distinguishable families",
                    spec.families
                )));
            }
            let block = draw_chain(&mut rng, spec);
            let branch = rng
                .gen_bool(spec.branch_probability)
                .then(|| draw_chain(&mut rng, spec));
            let template = FamilyTemplate {
                name: format!("family{f:02}"),
                stem: STEMS.choose(&mut rng).expect("stems").to_string(),
                block,
                branch,
                residual: rng.gen_bool(0.5),
                kernel: *[1usize, 3, 5, 7].choose(&mut rng).expect("kernels"),
            };
            if seen.insert(template.connection_keys(spec)) {
                out.push(template);
                break;
            }
        }
    }
    Ok(out)
}

fn layer_params(node: LayerNode, op: &str, width: usize, kernel: usize) -> LayerNode {
    let w = width.to_string();
    let k = format!("({kernel}, {kernel})");
    match op {
        "Conv2d" => node
            .with_param("in_channels", &w)
            .with_param("out_channels", &w)
            .with_param("kernel_size", k)
            .with_param("stride", "(1, 1)")
            .with_param("padding", format!("({0}, {0})", kernel / 2)),
        "Conv1d" => node
            .with_param("in_channels", &w)
            .with_param("out_channels", &w)
            .with_param("kernel_size", format!("({kernel},)"))
            .with_param("stride", "(1,)"),
        "Linear" => node
            .with_param("in_features", &w)
            .with_param("out_features", &w)
            .with_param("bias", "True"),
        "LayerNorm" => node
            .with_param("normalized_shape", format!("({w},)"))
            .with_param("eps", "1e-05")
            .with_param("elementwise_affine", "True"),
        "BatchNorm2d" => node
            .with_param("num_features", &w)
            .with_param("eps", "1e-05")
            .with_param("momentum", "0.1"),
        "Dropout" => node.with_param("p", "0.1").with_param("inplace", "False"),
        "MaxPool2d" | "AvgPool2d" => node
            .with_param("kernel_size", "2")
            .with_param("stride", "2"),
        "MultiheadAttention" => node
            .with_param("embed_dim", &w)
            .with_param("num_heads", (width / 64).max(1).to_string())
            .with_param("dropout", "0.0"),
        "LSTM" | "GRU" => node
            .with_param("input_size", &w)
            .with_param("hidden_size", &w)
            .with_param("num_layers", "1")
            .with_param("batch_first", "True"),
        "Embedding" => node
            .with_param("num_embeddings", "30522")
            .with_param("embedding_dim", &w),
        "GELU" => node.with_param("approximate", "none"),
        _ => node,
    }
}

struct Builder {
    nodes: Vec<LayerNode>,
    edges: Vec<(String, String)>,
    counter: usize,
}

impl Builder {
    fn add(&mut self, op: &str, width: usize, kernel: usize) -> String {
        let id = format!("{}_{}", op.to_lowercase(), self.counter);
        self.counter += 1;
        self.nodes
            .push(layer_params(LayerNode::new(id.clone(), op), op, width, kernel));
        id
    }

    fn link(&mut self, from: &str, to: &str) {
        self.edges.push((from.to_string(), to.to_string()));
    }

    fn chain(&mut self, from: &str, ops: &[String], width: usize, kernel: usize) -> String {
        let mut prev = from.to_string();
        for op in ops {
            let id = self.add(op, width, kernel);
            self.link(&prev, &id);
            prev = id;
        }
        prev
    }
}

fn instance(
    template: &FamilyTemplate,
    head: HeadKind,
    index: usize,
    blocks: usize,
    spec: &CorpusSpec,
    rng: &mut ChaCha8Rng,
) -> GraphDoc {
    let width = *spec.widths.choose(rng).expect("widths validated");
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
        counter: 0,
    };
    let stem = b.add(&template.stem, width, template.kernel);
    let mut prev = stem.clone();
    for _ in 0..blocks {
        let first = b.chain(&prev, &template.block, width, template.kernel);
        let mut out = first;
        if let Some(branch) = &template.branch {
            let second = b.chain(&prev, branch, width, template.kernel);
            let join = b.add("Add", width, template.kernel);
            b.link(&out, &join);
            b.link(&second, &join);
            out = join;
        }
        if template.residual {
            let add = b.add("Add", width, template.kernel);
            b.link(&prev, &add);
            b.link(&out, &add);
            out = add;
        }
        prev = out;
    }
    let head_ops: Vec<String> = head.ops.iter().map(|s| s.to_string()).collect();
    let last = b.chain(&prev, &head_ops, width, template.kernel);

    let mut tasks: BTreeSet<String> = BTreeSet::new();
    tasks.insert(head.tasks[0].to_string());
    for t in &head.tasks[1..] {
        if rng.gen_bool(0.5) {
            tasks.insert(t.to_string());
        }
    }
    let short = head.name.trim_start_matches("For").to_lowercase();
    let metadata = DeclaredMetadata {
        identifier: format!("synthetic/{}-{}-{index:03}", template.name, short),
        model_type: Some(template.model_type()),
        architecture: Some(format!("{}{}", template.class_name(), head.name)),
        tasks,
    };
    // Scramble declaration order; canonicalization must not care.
    b.nodes.shuffle(rng);
    b.edges.shuffle(rng);
    GraphDoc {
        nodes: b.nodes,
        edges: b.edges,
        inputs: vec![stem],
        outputs: vec![last],
        metadata,
    }
}

/// `families x instances` documents, family-major, deterministic per seed.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<GraphDoc>> {
    let templates = family_templates(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c0de);
    let mut docs = Vec::with_capacity(spec.families * spec.instances);
    for template in &templates {
        for i in 0..spec.instances {
            let head = HEADS[i % spec.heads];
            let blocks = rng.gen_range(spec.min_blocks..=spec.max_blocks);
            docs.push(instance(template, head, i, blocks, spec, &mut rng));
        }
    }
    Ok(docs)
}

/// Overwrite the declared `facet` of `round(fraction * n)` randomly chosen
/// documents with a value some other document declares. Returns the sorted
/// indices that were changed.
pub fn inject_mislabels(docs: &mut [GraphDoc], facet: Facet, fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);
    let count = ((docs.len() as f64) * fraction).round() as usize;
    let mut changed = Vec::with_capacity(count);
    for &i in order.iter() {
        if changed.len() == count {
            break;
        }
        let current = facet.target(&docs[i].metadata);
        let candidates: Vec<usize> = (0..docs.len())
            .filter(|&j| facet.target(&docs[j].metadata) != current)
            .filter(|&j| match facet {
                // a wrong task set must not share any task with the true one
                Facet::Task => docs[j].metadata.tasks.is_disjoint(&docs[i].metadata.tasks),
                _ => true,
            })
            .collect();
        let Some(&donor) = candidates.choose(&mut rng) else {
            continue;
        };
        let donor_meta = docs[donor].metadata.clone();
        let meta = &mut docs[i].metadata;
        match facet {
            Facet::ModelType => meta.model_type = donor_meta.model_type,
            Facet::Architecture => meta.architecture = donor_meta.architecture,
            Facet::Task => meta.tasks = donor_meta.tasks,
        }
        changed.push(i);
    }
    changed.sort_unstable();
    changed
}
