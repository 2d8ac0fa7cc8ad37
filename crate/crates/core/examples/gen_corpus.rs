//! Generate a synthetic corpus and summarize its families.
//!
//!     cargo run --example gen_corpus -- [out_dir]

use std::collections::BTreeMap;

use archaudit::corpus::{family_templates, gen_corpus, CorpusSpec};
use archaudit::pipeline::write_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = CorpusSpec {
        families: 6,
        instances: 8,
        ..CorpusSpec::default()
    };
    for t in family_templates(&spec)? {
        println!(
            "{:<9} stem {:<10} block {:?} branch {:?} residual {}",
            t.model_type(),
            t.stem,
            t.block,
            t.branch,
            t.residual
        );
    }
    let docs = gen_corpus(&spec)?;
    let mut per_arch: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        *per_arch.entry(d.metadata.architecture.as_deref().unwrap_or("-")).or_default() += 1;
    }
    println!("{} graphs, {} architectures", docs.len(), per_arch.len());
    if let Some(dir) = std::env::args().nth(1) {
        let paths = write_corpus(&docs, dir.as_ref())?;
        println!("wrote {} files to {dir}", paths.len());
    }
    Ok(())
}
