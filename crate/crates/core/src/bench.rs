//! Per-stage latency and throughput measurements.
//!
//! Latency is sampled per model and per repetition after one warm-up pass.
//! Throughput comes from a separate batched pass over all models, so it is
//! not derived from the latency samples.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::aptm::{build_aptm, export_aptm_json, Aptm};
use crate::error::{Error, Result};
use crate::features::{extract_ngrams, vectorize, NgramFeature};
use crate::graph::{parse_graph_doc, GraphDoc};
use crate::learner::MlpModel;
use crate::pipeline::{Facet, ModelBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Aptm,
    Export,
    Featurize,
    Predict,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Aptm,
        Stage::Export,
        Stage::Featurize,
        Stage::Predict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Aptm => "aptm",
            Stage::Export => "export",
            Stage::Featurize => "featurize",
            Stage::Predict => "predict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    /// Models processed per repetition.
    pub n: usize,
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Standard deviation of the per-repetition mean latency.
    pub rep_std_ms: f64,
    pub throughput_per_s: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(stage: Stage, n: usize, reps: usize, samples_ms: Vec<f64>, throughput_per_s: f64) -> StageTiming {
    let mut sorted = samples_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let rep_means: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        samples_ms.chunks(n).map(mean).collect()
    };
    let rep_std_ms = if reps > 1 {
        let m = mean(&rep_means);
        (rep_means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (rep_means.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    StageTiming {
        stage,
        n,
        mean_ms: mean(&samples_ms),
        median_ms: percentile(&sorted, 0.5),
        p95_ms: percentile(&sorted, 0.95),
        samples_ms,
        rep_std_ms,
        throughput_per_s,
    }
}

/// Time `f` on every input `reps` times (after one untimed warm-up pass),
/// then time one batched pass per repetition and keep the fastest.
fn measure<T, R>(
    stage: Stage,
    inputs: &[T],
    reps: usize,
    mut f: impl FnMut(&T) -> R,
    mut batch: impl FnMut(&[T]),
) -> StageTiming {
    for x in inputs {
        black_box(f(x));
    }
    let mut samples = Vec::with_capacity(inputs.len() * reps);
    for _ in 0..reps {
        for x in inputs {
            let start = Instant::now();
            black_box(f(x));
            samples.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let start = Instant::now();
        batch(inputs);
        best = best.min(start.elapsed().as_secs_f64());
    }
    let throughput = if inputs.is_empty() || best <= 0.0 {
        0.0
    } else {
        inputs.len() as f64 / best
    };
    summarize(stage, inputs.len(), reps, samples, throughput)
}

/// Benchmark every stage over `sources` (graph documents in JSON form).
/// The predict stage uses the bundle's model_type classifier, or its first
/// classifier when that facet is absent.
pub fn bench(sources: &[String], bundle: &ModelBundle, reps: usize) -> Result<Vec<StageTiming>> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".to_string()));
    }
    bundle.check()?;
    let model: &MlpModel = bundle
        .models
        .get(&Facet::ModelType)
        .or_else(|| bundle.models.values().next())
        .ok_or_else(|| Error::Config("bundle holds no classifier".to_string()))?;
    let parts = bundle.vocab.parts();

    let docs: Vec<GraphDoc> = sources.iter().map(|s| parse_graph_doc(s)).collect::<Result<_>>()?;
    let aptms: Vec<Aptm> = docs.iter().map(build_aptm).collect::<Result<_>>()?;
    let features: Vec<NgramFeature> = aptms.iter().map(|a| extract_ngrams(a, parts)).collect();
    let vectors: Vec<Vec<f64>> = features.iter().map(|f| vectorize(f, &bundle.vocab).values).collect();

    let mut out = Vec::with_capacity(Stage::ALL.len());
    out.push(measure(
        Stage::Ingest,
        sources,
        reps,
        |s| parse_graph_doc(s).map(|d| d.nodes.len()).unwrap_or(0),
        |batch| {
            for s in batch {
                black_box(parse_graph_doc(s).map(|d| d.nodes.len()).unwrap_or(0));
            }
        },
    ));
    out.push(measure(
        Stage::Aptm,
        &docs,
        reps,
        |d| build_aptm(d).map(|a| a.layers.len()).unwrap_or(0),
        |batch| {
            for d in batch {
                black_box(build_aptm(d).map(|a| a.layers.len()).unwrap_or(0));
            }
        },
    ));
    out.push(measure(
        Stage::Export,
        &aptms,
        reps,
        export_aptm_json,
        |batch| {
            for a in batch {
                black_box(export_aptm_json(a));
            }
        },
    ));
    out.push(measure(
        Stage::Featurize,
        &aptms,
        reps,
        |a| vectorize(&extract_ngrams(a, parts), &bundle.vocab),
        |batch| {
            for a in batch {
                black_box(vectorize(&extract_ngrams(a, parts), &bundle.vocab));
            }
        },
    ));
    out.push(measure(
        Stage::Predict,
        &vectors,
        reps,
        |v| model.predict(v).map(|p| p.len()).unwrap_or(0),
        |batch| {
            let width = model.input_dim();
            let matrix = Array2::from_shape_fn((batch.len(), width), |(r, c)| batch[r][c]);
            if let Ok(cache) = model.forward_batch(matrix.view()) {
                for row in cache.logits().rows() {
                    black_box(model.probabilities(&row.to_vec()));
                }
            }
        },
    ));
    Ok(out)
}

pub const TSV_HEADER: &str = "stage\tn\tmean_ms\tmedian_ms\tp95_ms\tthroughput_per_s";

/// Machine-readable form, one row per stage.
pub fn timings_tsv(timings: &[StageTiming]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for t in timings {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.1}",
            t.stage.name(),
            t.n,
            t.mean_ms,
            t.median_ms,
            t.p95_ms,
            t.throughput_per_s
        );
    }
    out
}

/// Aligned table for terminals, including repetition spread.
pub fn timings_table(timings: &[StageTiming]) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>11} {:>11} {:>11} {:>12} {:>14}\n",
        "stage", "n", "mean ms", "median ms", "p95 ms", "rep std ms", "models/s"
    );
    for t in timings {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>11.4} {:>11.4} {:>11.4} {:>12.4} {:>14.1}",
            t.stage.name(),
            t.n,
            t.mean_ms,
            t.median_ms,
            t.p95_ms,
            t.rep_std_ms,
            t.throughput_per_s
        );
    }
    out
}
