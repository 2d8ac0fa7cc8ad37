use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use archaudit::aptm::{build_aptm, export_aptm_json};
use archaudit::audit::{audit_corpus, AuditError, AuditPolicy, AuditReport};
use archaudit::bench::{bench, timings_table, timings_tsv};
use archaudit::config::RunConfig;
use archaudit::corpus::gen_corpus;
use archaudit::features::{export_feature_json, export_sequence_json, extract_ngrams, FeatureParts};
use archaudit::graph::{serialize_graph_doc, validate_graph, GraphDoc};
use archaudit::learner::Optimizer;
use archaudit::namelint::{format_lint_lines, lint_json, lint_record, Lexicon};
use archaudit::pipeline::{
    collect_inputs, evaluate_bundle, featurize, holdout_split, load_graph, predict_feature, train_bundle,
    write_corpus, ModelBundle,
};
use archaudit::Result;

#[derive(Parser)]
#[command(name = "archaudit", version, about = "Structural audit of neural-network model metadata")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every randomized step (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch stages (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Lines,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a graph document or ONNX file and write the canonical graph document
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the canonical APTM export of a graph
    Aptm {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the n-gram feature document (or the layer sequence) of a graph
    Features {
        input: PathBuf,
        /// `l` or `l+p`
        #[arg(long)]
        parts: Option<FeatureParts>,
        /// Emit the layer-sequence document instead of n-gram counts
        #[arg(long)]
        sequence: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train per-facet classifiers on a corpus and write a model bundle
    Train {
        /// Graph files or directories
        inputs: Vec<PathBuf>,
        /// Output bundle directory
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        parts: Option<FeatureParts>,
        /// Share of the corpus kept for training; the rest is evaluated
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_parser = parse_optimizer)]
        optimizer: Option<Optimizer>,
    },
    /// Print ranked predictions for each graph
    Predict {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Format::Lines)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare predictions with declared metadata; exit 1 on any inconsistency
    Audit {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// JSON audit policy (overrides the config file)
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Lines)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag the naming elements of model identifiers
    NameParse {
        /// Identifiers; read one per line from standard input when absent
        identifiers: Vec<String>,
        /// Replacement lexicon file
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Lines)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus of graph documents
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        families: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Time every pipeline stage; writes TSV to --out and a table to stdout
    Bench {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_optimizer(s: &str) -> std::result::Result<Optimizer, String> {
    match s {
        "adam" => Ok(Optimizer::Adam),
        "sgd" => Ok(Optimizer::Sgd),
        other => Err(format!("unknown optimizer `{other}` (adam or sgd)")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_checked(path: &Path) -> Result<GraphDoc> {
    let doc = load_graph(path)?;
    for finding in validate_graph(&doc).findings {
        warn!("{}: {finding}", path.display());
    }
    Ok(doc)
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<GraphDoc>> {
    collect_inputs(inputs)?.iter().map(|p| load_checked(p)).collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed(cli.global.seed);
    if let Some(w) = cli.global.workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }

    match cli.command {
        Command::Ingest { input, out } => {
            let doc = load_checked(&input)?;
            emit(out.as_deref(), &serialize_graph_doc(&doc))?;
        }
        Command::Aptm { input, out } => {
            let aptm = build_aptm(&load_checked(&input)?)?;
            emit(out.as_deref(), &export_aptm_json(&aptm))?;
        }
        Command::Features {
            input,
            parts,
            sequence,
            out,
        } => {
            let doc = load_checked(&input)?;
            let aptm = build_aptm(&doc)?;
            let text = if sequence {
                export_sequence_json(&aptm, &doc.metadata)
            } else {
                export_feature_json(&extract_ngrams(&aptm, parts.unwrap_or(cfg.features.parts)))
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Train {
            inputs,
            model,
            parts,
            train_fraction,
            epochs,
            optimizer,
        } => {
            let parts = parts.unwrap_or(cfg.features.parts);
            let mut train_cfg = cfg.train.clone();
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            if let Some(o) = optimizer {
                train_cfg.optimizer = o;
            }
            let paths = collect_inputs(&inputs)?;
            let docs = paths.iter().map(|p| load_checked(p)).collect::<Result<Vec<_>>>()?;
            let features = docs.iter().map(|d| featurize(d, parts)).collect::<Result<Vec<_>>>()?;
            let (train_idx, held_idx) = holdout_split(docs.len(), train_fraction, train_cfg.seed);
            let pick = |idx: &[usize]| {
                (
                    idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>(),
                    idx.iter().map(|&i| &docs[i].metadata).collect::<Vec<_>>(),
                )
            };
            let (train_f, train_m) = pick(&train_idx);
            let bundle = train_bundle(&train_f, &train_m, parts, &train_cfg)?;
            bundle.save(&model)?;
            let held_paths: String = held_idx
                .iter()
                .map(|&i| format!("{}\n", paths[i].display()))
                .collect();
            fs::write(model.join("holdout.txt"), held_paths)?;
            if !held_idx.is_empty() {
                let (held_f, held_m) = pick(&held_idx);
                let metrics = evaluate_bundle(&bundle, &held_f, &held_m)?;
                let mut text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
                text.push('\n');
                fs::write(model.join("metrics.json"), &text)?;
                for (facet, m) in &metrics {
                    println!(
                        "{facet}\taccuracy={:.4}\tprecision={:.4}\trecall={:.4}\tf1={:.4}\ttop3={:.4}",
                        m.scores.accuracy,
                        m.scores.precision,
                        m.scores.recall,
                        m.scores.f1,
                        m.scores.top_k.last().copied().unwrap_or(0.0)
                    );
                }
            }
        }
        Command::Predict {
            inputs,
            model,
            k,
            format,
            out,
        } => {
            let bundle = ModelBundle::load(&model)?;
            let mut records = Vec::new();
            for doc in load_all(&inputs)? {
                let preds = predict_feature(&bundle, &featurize(&doc, bundle.vocab.parts())?, k)?;
                records.push((doc.metadata.identifier.clone(), preds));
            }
            let text = match format {
                Format::Lines => {
                    let mut s = String::new();
                    for (id, preds) in &records {
                        for (facet, ranked) in preds {
                            let cells: Vec<String> =
                                ranked.iter().map(|(l, p)| format!("{l}:{p:.6}")).collect();
                            s.push_str(&format!("{id}\t{facet}\t{}\n", cells.join("\t")));
                        }
                    }
                    s
                }
                Format::Json => {
                    let map: BTreeMap<&str, _> = records.iter().map(|(id, p)| (id.as_str(), p)).collect();
                    let mut s = serde_json::to_string_pretty(&map).expect("predictions serialize");
                    s.push('\n');
                    s
                }
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Audit {
            inputs,
            model,
            policy,
            format,
            out,
        } => {
            let bundle = ModelBundle::load(&model)?;
            let policy = match policy {
                Some(path) => serde_json::from_str::<AuditPolicy>(&fs::read_to_string(path)?)
                    .map_err(|e| archaudit::Error::Config(format!("policy: {e}")))?,
                None => cfg.audit.clone(),
            };
            let mut docs = Vec::new();
            let mut load_errors = Vec::new();
            for path in collect_inputs(&inputs)? {
                match load_checked(&path) {
                    Ok(doc) => docs.push(doc),
                    Err(e) => load_errors.push(AuditError {
                        identifier: path.display().to_string(),
                        message: e.to_string(),
                    }),
                }
            }
            let report = audit_corpus(&docs, &bundle, &policy)?;
            let mut errors = report.errors;
            errors.extend(load_errors);
            let report = AuditReport::from_parts(report.entries, errors);
            let text = match format {
                Format::Lines => report.to_lines(),
                Format::Json => report.to_json(),
            };
            emit(out.as_deref(), &text)?;
            for (verdict, n) in &report.summary {
                eprintln!("{verdict}: {n}");
            }
            if report.has_inconsistency() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::NameParse {
            identifiers,
            lexicon,
            format,
            out,
        } => {
            let lex = match lexicon {
                Some(path) => fs::read_to_string(path)?.parse::<Lexicon>()?,
                None => Lexicon::builtin(),
            };
            let ids = if identifiers.is_empty() {
                let mut buf = String::new();
                io::stdin().read_to_string(&mut buf)?;
                buf.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect()
            } else {
                identifiers
            };
            let records = ids.iter().map(|id| lint_record(id, &lex)).collect::<Result<Vec<_>>>()?;
            let text = match format {
                Format::Lines => format_lint_lines(&records),
                Format::Json => lint_json(&records),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Gen {
            out,
            families,
            instances,
        } => {
            let mut spec = cfg.corpus.clone();
            if let Some(f) = families {
                spec.families = f;
            }
            if let Some(i) = instances {
                spec.instances = i;
            }
            let paths = write_corpus(&gen_corpus(&spec)?, &out)?;
            eprintln!("wrote {} graphs to {}", paths.len(), out.display());
        }
        Command::Bench {
            inputs,
            model,
            reps,
            out,
        } => {
            let bundle = ModelBundle::load(&model)?;
            let sources = collect_inputs(&inputs)?
                .iter()
                .map(fs::read_to_string)
                .collect::<io::Result<Vec<_>>>()?;
            let timings = bench(&sources, &bundle, reps.unwrap_or(cfg.bench.reps))?;
            print!("{}", timings_table(&timings));
            if let Some(path) = out {
                fs::write(path, timings_tsv(&timings))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
