//! Sectioned word and pattern lists backing the element tagger.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The twelve naming elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    #[serde(rename = "A")]
    Architecture,
    #[serde(rename = "S")]
    Size,
    #[serde(rename = "D")]
    Dataset,
    #[serde(rename = "C")]
    Characteristic,
    #[serde(rename = "V")]
    Version,
    #[serde(rename = "L")]
    Language,
    #[serde(rename = "T")]
    Task,
    #[serde(rename = "R")]
    Training,
    #[serde(rename = "F")]
    Reuse,
    #[serde(rename = "Y")]
    Layers,
    #[serde(rename = "P")]
    Parameters,
    #[serde(rename = "O")]
    Other,
}

impl Element {
    /// Order in which rules are tried when a window matches several lists.
    pub const PRIORITY: [Element; 11] = [
        Element::Version,
        Element::Parameters,
        Element::Layers,
        Element::Size,
        Element::Characteristic,
        Element::Architecture,
        Element::Dataset,
        Element::Language,
        Element::Task,
        Element::Training,
        Element::Reuse,
    ];

    pub fn tag(self) -> char {
        match self {
            Element::Architecture => 'A',
            Element::Size => 'S',
            Element::Dataset => 'D',
            Element::Characteristic => 'C',
            Element::Version => 'V',
            Element::Language => 'L',
            Element::Task => 'T',
            Element::Training => 'R',
            Element::Reuse => 'F',
            Element::Layers => 'Y',
            Element::Parameters => 'P',
            Element::Other => 'O',
        }
    }

    pub fn from_tag(c: char) -> Option<Element> {
        Some(match c {
            'A' => Element::Architecture,
            'S' => Element::Size,
            'D' => Element::Dataset,
            'C' => Element::Characteristic,
            'V' => Element::Version,
            'L' => Element::Language,
            'T' => Element::Task,
            'R' => Element::Training,
            'F' => Element::Reuse,
            'Y' => Element::Layers,
            'P' => Element::Parameters,
            'O' => Element::Other,
            _ => return None,
        })
    }

    fn section(self) -> &'static str {
        match self {
            Element::Architecture => "architecture",
            Element::Size => "size",
            Element::Dataset => "dataset",
            Element::Characteristic => "characteristic",
            Element::Version => "version",
            Element::Language => "language",
            Element::Task => "task",
            Element::Training => "training",
            Element::Reuse => "reuse",
            Element::Layers => "layers",
            Element::Parameters => "parameters",
            Element::Other => "other",
        }
    }

    fn from_section(name: &str) -> Option<Element> {
        Element::PRIORITY
            .iter()
            .chain(std::iter::once(&Element::Other))
            .copied()
            .find(|e| e.section() == name)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

#[derive(Debug, Clone, Default)]
struct Section {
    words: HashSet<String>,
    patterns: Vec<Regex>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    sections: BTreeMap<Element, Section>,
}

const BUILTIN: &str = include_str!("../../data/lexicon.txt");

/// Lowercase and unify delimiters so entries and windows compare equal.
pub(crate) fn normalize(text: &str) -> String {
    text.trim()
        .to_lowercase()
        .replace(['_', ' ', '/'], "-")
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> Lexicon {
        BUILTIN.parse().expect("bundled lexicon parses")
    }

    pub fn words(&self, element: Element) -> impl Iterator<Item = &str> {
        self.sections
            .get(&element)
            .into_iter()
            .flat_map(|s| s.words.iter().map(String::as_str))
    }

    pub fn contains_word(&self, element: Element, window: &str) -> bool {
        self.sections
            .get(&element)
            .is_some_and(|s| s.words.contains(window))
    }

    /// Whether `window` (already normalized) matches a word or pattern of
    /// `element`.
    pub fn matches(&self, element: Element, window: &str) -> bool {
        self.sections
            .get(&element)
            .is_some_and(|s| s.words.contains(window) || s.patterns.iter().any(|p| p.is_match(window)))
    }

    /// Words listed under more than one section.
    pub fn overlaps(&self) -> Vec<(String, Element, Element)> {
        let mut out = Vec::new();
        let sections: Vec<(&Element, &Section)> = self.sections.iter().collect();
        for (i, (a, sa)) in sections.iter().enumerate() {
            for (b, sb) in &sections[i + 1..] {
                let mut shared: Vec<&String> = sa.words.intersection(&sb.words).collect();
                shared.sort();
                out.extend(shared.into_iter().map(|w| (w.clone(), **a, **b)));
            }
        }
        out
    }
}

impl FromStr for Lexicon {
    type Err = Error;

    fn from_str(text: &str) -> Result<Lexicon> {
        let mut sections: BTreeMap<Element, Section> = BTreeMap::new();
        let mut current: Option<Element> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: n + 1,
                column: 1,
                message,
            };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let element = Element::from_section(name)
                    .ok_or_else(|| err(format!("unknown section `{name}`")))?;
                sections.entry(element).or_default();
                current = Some(element);
                continue;
            }
            let element = current.ok_or_else(|| err("entry before any section".into()))?;
            let section = sections.entry(element).or_default();
            if let Some(pattern) = line.strip_prefix("re:") {
                let regex = Regex::new(&format!("^(?:{pattern})$"))
                    .map_err(|e| err(format!("bad pattern: {e}")))?;
                section.patterns.push(regex);
            } else {
                section.words.insert(normalize(line));
            }
        }
        Ok(Lexicon { sections })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sections_are_disjoint() {
        let lex = Lexicon::builtin();
        assert_eq!(lex.overlaps(), vec![]);
        assert!(lex.contains_word(Element::Architecture, "bert"));
        assert!(lex.matches(Element::Version, "v2"));
        assert!(lex.matches(Element::Parameters, "8b"));
        assert!(lex.matches(Element::Layers, "l-24"));
    }

    #[test]
    fn seed_examples_are_covered() {
        let lex = Lexicon::builtin();
        let cases: &[(Element, &[&str])] = &[
            (Element::Architecture, &["bert", "albert", "resnet"]),
            (Element::Size, &["50", "101", "base", "large", "xxlarge"]),
            (Element::Dataset, &["squad", "imagenet"]),
            (Element::Characteristic, &["case", "uncased", "1024-1024"]),
            (Element::Version, &["v1", "v2"]),
            (Element::Language, &["english", "chinese", "arabic"]),
            (Element::Task, &["qa", "cls", "face-recognition"]),
            (Element::Training, &["pretrain", "sparse"]),
            (Element::Reuse, &["fine-tune", "distill", "few-shot", "instruct"]),
            (Element::Layers, &["l-12", "l-24"]),
            (Element::Parameters, &["100m", "8b"]),
            (Element::Other, &["demo", "test"]),
        ];
        for (element, words) in cases {
            for w in *words {
                assert!(lex.matches(*element, w), "{w} should be {element}");
            }
        }
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = "[nonsense]\n".parse::<Lexicon>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = "# c\nword\n".parse::<Lexicon>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = "[size]\nre:(\n".parse::<Lexicon>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn tags_round_trip() {
        for e in Element::PRIORITY.iter().chain([Element::Other].iter()) {
            assert_eq!(Element::from_tag(e.tag()), Some(*e));
        }
    }
}
