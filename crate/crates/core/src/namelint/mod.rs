//! Rule-based tagging of model identifiers.
//!
//! An identifier such as `google/bert-base-uncased` is split into tokens on
//! `-`, `_`, `/` and `.` (a `.` between two digits stays inside the token, so
//! `3.1` survives). The owner prefix before the first `/` becomes one segment
//! tagged `O`. Remaining tokens are tagged greedily: at each position the
//! longest window of up to three tokens that matches a lexicon entry wins,
//! and a window matching several lists takes the first element in
//! [`Element::PRIORITY`]. Unmatched tokens are `O`.

pub mod lexicon;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use lexicon::{Element, Lexicon};
use lexicon::normalize;

const DELIMITERS: [char; 4] = ['-', '_', '/', '.'];
const MAX_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Delimiters that follow the token (empty for the last one).
    pub sep: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokens {
    /// Text before the first `/`, if any.
    pub owner: Option<Token>,
    pub tokens: Vec<Token>,
}

impl Tokens {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn reconstruct(&self) -> String {
        self.owner
            .iter()
            .chain(&self.tokens)
            .map(|t| format!("{}{}", t.text, t.sep))
            .collect()
    }
}

pub fn tokenize_identifier(identifier: &str) -> Result<Tokens> {
    if identifier.is_empty() {
        return Err(Error::Validation("identifier is empty".to_string()));
    }
    let (owner, rest) = match identifier.split_once('/') {
        Some((owner, rest)) => (
            Some(Token {
                text: owner.to_string(),
                sep: "/".to_string(),
            }),
            rest,
        ),
        None => (None, identifier),
    };
    let chars: Vec<char> = rest.chars().collect();
    let mut tokens = Vec::new();
    let mut text = String::new();
    let mut sep = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(char::is_ascii_digit);
        if DELIMITERS.contains(&c) && !decimal_point {
            sep.push(c);
        } else {
            if !sep.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut text),
                    sep: std::mem::take(&mut sep),
                });
            }
            text.push(c);
        }
    }
    if !text.is_empty() || !sep.is_empty() {
        tokens.push(Token { text, sep });
    }
    Ok(Tokens { owner, tokens })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub sep: String,
    pub element: Element,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameParse {
    pub identifier: String,
    pub segments: Vec<Segment>,
    /// Whether the first segment is the owner prefix.
    pub has_owner: bool,
}

impl NameParse {
    /// Hyphen-joined tags, e.g. `A-S-C-F-D`.
    pub fn signature(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.element.tag().to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn elements(&self) -> Vec<Element> {
        self.segments.iter().map(|s| s.element).collect()
    }

    pub fn reconstruct(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{}{}", s.text, s.sep))
            .collect()
    }

    fn name_segments(&self) -> &[Segment] {
        &self.segments[usize::from(self.has_owner)..]
    }
}

fn is_language_pair(lex: &Lexicon, window: &[&str]) -> bool {
    let lang = |w: &str| lex.contains_word(Element::Language, w);
    match window {
        [a, b] => lang(a) && lang(b),
        [a, "to", b] => lang(a) && lang(b),
        _ => false,
    }
}

fn classify_window(lex: &Lexicon, window: &[&str]) -> Option<Element> {
    let joined = window.join("-");
    Element::PRIORITY.into_iter().find(|&e| {
        lex.matches(e, &joined) || (e == Element::Task && is_language_pair(lex, window))
    })
}

pub fn classify_elements(tokens: &Tokens, lex: &Lexicon) -> NameParse {
    let mut segments = Vec::new();
    if let Some(owner) = &tokens.owner {
        segments.push(Segment {
            text: owner.text.clone(),
            sep: owner.sep.clone(),
            element: Element::Other,
        });
    }
    let normalized: Vec<String> = tokens.tokens.iter().map(|t| normalize(&t.text)).collect();
    let mut i = 0;
    while i < tokens.tokens.len() {
        let longest = MAX_WINDOW.min(tokens.tokens.len() - i);
        let (width, element) = (1..=longest)
            .rev()
            .find_map(|w| {
                let window: Vec<&str> = normalized[i..i + w].iter().map(String::as_str).collect();
                if window.iter().any(|t| t.is_empty()) {
                    return None;
                }
                classify_window(lex, &window).map(|e| (w, e))
            })
            .unwrap_or((1, Element::Other));
        let span = &tokens.tokens[i..i + width];
        let mut text = String::new();
        for (k, t) in span.iter().enumerate() {
            text.push_str(&t.text);
            if k + 1 < span.len() {
                text.push_str(&t.sep);
            }
        }
        segments.push(Segment {
            text,
            sep: span[width - 1].sep.clone(),
            element,
        });
        i += width;
    }
    NameParse {
        identifier: tokens.reconstruct(),
        segments,
        has_owner: tokens.owner.is_some(),
    }
}

/// Tokenize and tag in one step.
pub fn parse_name(identifier: &str, lex: &Lexicon) -> Result<NameParse> {
    Ok(classify_elements(&tokenize_identifier(identifier)?, lex))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    ImplementationUnit,
    ApplicationOrTask,
    ImplementationWithAppTask,
    Other,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn convention_of(elements: &[Element]) -> Convention {
    use Element::*;
    let implementation = elements.iter().any(|e| {
        matches!(
            e,
            Architecture | Size | Characteristic | Version | Parameters | Layers | Training | Dataset
        )
    });
    let application = elements.contains(&Task);
    match (implementation, application) {
        (true, true) => Convention::ImplementationWithAppTask,
        (true, false) => Convention::ImplementationUnit,
        (false, true) => Convention::ApplicationOrTask,
        (false, false) => Convention::Other,
    }
}

pub fn classify_convention(parse: &NameParse) -> Convention {
    convention_of(&parse.elements())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    NoArchitectureToken,
    AllOtherSegments,
    OwnerOnlyName,
}

impl FindingKind {
    pub fn code(self) -> &'static str {
        match self {
            FindingKind::NoArchitectureToken => "no-architecture-token",
            FindingKind::AllOtherSegments => "all-other-segments",
            FindingKind::OwnerOnlyName => "owner-only-name",
        }
    }

    fn message(self) -> &'static str {
        match self {
            FindingKind::NoArchitectureToken => "identifier names no known architecture",
            FindingKind::AllOtherSegments => "no segment carries recognizable information",
            FindingKind::OwnerOnlyName => "identifier carries nothing beyond its owner",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub severity: &'static str,
    pub message: &'static str,
}

pub fn lint(parse: &NameParse) -> Vec<Finding> {
    let name = parse.name_segments();
    let mut kinds = BTreeSet::new();
    let owner_text = parse
        .has_owner
        .then(|| normalize(&parse.segments[0].text));
    let name_text: String = name
        .iter()
        .map(|s| format!("{}{}", s.text, s.sep))
        .collect();
    if name.iter().all(|s| s.text.is_empty())
        || owner_text.is_some_and(|o| o == normalize(&name_text))
    {
        kinds.insert(FindingKind::OwnerOnlyName);
    }
    if !name.iter().any(|s| s.element == Element::Architecture) {
        kinds.insert(FindingKind::NoArchitectureToken);
    }
    if name.iter().all(|s| s.element == Element::Other) {
        kinds.insert(FindingKind::AllOtherSegments);
    }
    kinds
        .into_iter()
        .map(|kind| Finding {
            kind,
            severity: "info",
            message: kind.message(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintRecord {
    pub identifier: String,
    pub signature: String,
    pub convention: Convention,
    pub segments: Vec<Segment>,
    pub findings: Vec<Finding>,
}

pub fn lint_record(identifier: &str, lex: &Lexicon) -> Result<LintRecord> {
    let parse = parse_name(identifier, lex)?;
    Ok(LintRecord {
        identifier: parse.identifier.clone(),
        signature: parse.signature(),
        convention: classify_convention(&parse),
        findings: lint(&parse),
        segments: parse.segments,
    })
}

/// `<identifier>\t<signature>\t<convention>` then one indented line per finding.
pub fn format_lint_lines(records: &[LintRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.identifier, r.signature, r.convention));
        for f in &r.findings {
            out.push_str(&format!("  {}: {}: {}\n", f.severity, f.kind.code(), f.message));
        }
    }
    out
}

pub fn lint_json(records: &[LintRecord]) -> String {
    let mut text = serde_json::to_string_pretty(records).expect("lint records serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(id: &str) -> String {
        parse_name(id, &Lexicon::builtin()).unwrap().signature()
    }

    #[test]
    fn tokenizes_on_delimiters() {
        let t = tokenize_identifier("bert-base-uncased").unwrap();
        assert_eq!(t.texts(), ["bert", "base", "uncased"]);
        let t = tokenize_identifier("Meta-Llama-3.1-8B-Instruct").unwrap();
        assert_eq!(t.texts(), ["Meta", "Llama", "3.1", "8B", "Instruct"]);
        for id in ["a_b-c", "org/x.y__z", "-lead", "trail-", "a..1.2", "x/y/z"] {
            assert_eq!(tokenize_identifier(id).unwrap().reconstruct(), id);
        }
        assert!(tokenize_identifier("").is_err());
    }

    #[test]
    fn owner_is_isolated() {
        let t = tokenize_identifier("google/bert-base").unwrap();
        assert_eq!(t.owner.unwrap().text, "google");
        assert_eq!(sig("google/bert-base"), "O-A-S");
    }

    #[test]
    fn table_examples() {
        assert_eq!(sig("bert-base-uncased-finetuned-spam"), "A-S-C-F-D");
        assert_eq!(sig("Meta-Llama-3.1-8B-Instruct"), "O-A-V-P-F");
        assert_eq!(sig("potat1"), "O");
        assert_eq!(sig("bert-large-L-24"), "A-S-Y");
    }

    #[test]
    fn conventions() {
        let lex = Lexicon::builtin();
        let conv = |id: &str| classify_convention(&parse_name(id, &lex).unwrap());
        assert_eq!(conv("bert-base-uncased"), Convention::ImplementationUnit);
        assert_eq!(conv("whisper-large-v2-pt-v3"), Convention::ImplementationUnit);
        assert_eq!(conv("fake-news-detector"), Convention::ApplicationOrTask);
        assert_eq!(conv("question-answering"), Convention::ApplicationOrTask);
        assert_eq!(
            conv("distilroberta-base-finetuned-fake-news-detection"),
            Convention::ImplementationWithAppTask
        );
        assert_eq!(conv("potat1"), Convention::Other);
        assert_eq!(conv("csproject"), Convention::Other);
        assert_eq!(conv("opus-mt-en-de"), Convention::ApplicationOrTask);
    }

    #[test]
    fn lint_findings() {
        let lex = Lexicon::builtin();
        let kinds = |id: &str| -> Vec<FindingKind> {
            lint(&parse_name(id, &lex).unwrap()).into_iter().map(|f| f.kind).collect()
        };
        assert_eq!(kinds("test-v1"), [FindingKind::NoArchitectureToken]);
        assert!(kinds("bert-base-uncased").is_empty());
        assert_eq!(
            kinds("potat1"),
            [FindingKind::NoArchitectureToken, FindingKind::AllOtherSegments]
        );
        assert!(kinds("acme/").contains(&FindingKind::OwnerOnlyName));
        assert_eq!(kinds("gpt2/gpt2"), [FindingKind::OwnerOnlyName]);
    }
}
