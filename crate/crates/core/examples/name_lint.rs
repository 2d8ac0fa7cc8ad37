//! Tag naming elements, classify naming conventions and lint identifiers.
//!
//!     cargo run --example name_lint -- [identifier ...]

use archaudit::namelint::{classify_convention, lint, parse_name, Lexicon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lex = Lexicon::builtin();
    let mut ids: Vec<String> = std::env::args().skip(1).collect();
    if ids.is_empty() {
        ids = [
            "bert-base-uncased-finetuned-spam",
            "Meta-Llama-3.1-8B-Instruct",
            "distilroberta-base-finetuned-fake-news-detection",
            "Helsinki-NLP/opus-mt-en-de",
            "potat1",
            "gpt2/gpt2",
        ]
        .map(String::from)
        .to_vec();
    }
    for id in &ids {
        let parse = parse_name(id, &lex)?;
        let tagged: Vec<String> = parse.segments.iter().map(|s| format!("{}:{}", s.text, s.element)).collect();
        println!("{id}\n  {}  {}  [{}]", parse.signature(), classify_convention(&parse), tagged.join(" "));
        for finding in lint(&parse) {
            println!("  {}: {}", finding.kind.code(), finding.message);
        }
    }
    Ok(())
}
