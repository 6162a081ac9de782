//! Metadata text to token streams and a bounded vocabulary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Painting;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot read stopword file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("no documents to build a vocabulary from")]
    NoDocuments,
    #[error("vocabulary is empty (min_count = {0} filters out every word)")]
    EmptyVocabulary(usize),
}

pub const DEFAULT_MIN_COUNT: usize = 2;

static DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Set of words removed during preprocessing.
#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub painting_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn new(painting_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            painting_id: painting_id.into(),
            tokens,
        }
    }
}

// Words the suffix rules would mangle.
const KEEP_AS_IS: &[&str] = &[
    "alias", "always", "analysis", "atlas", "canvas", "anything", "basis", "bias", "ceiling", "christ", "christmas", "chaos",
    "crisis", "during", "emphasis", "evening", "everything", "genesis", "gas", "lens", "morning",
    "moses", "nothing", "oasis", "paris", "pious", "perhaps", "religious", "series", "something",
    "species", "spring", "string", "thus", "various", "venus", "wedding", "glorious", "famous",
    "precious", "jesus", "james", "charles", "thomas", "nicholas", "dionysus", "bacchus",
    "hercules", "achilles", "ulysses", "narcissus", "icarus", "judas", "lazarus", "marcus",
    "ceres", "mars", "les", "des", "his", "this", "its", "has", "was", "is", "us", "as",
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn strip_plural(w: &str) -> Option<String> {
    let b = w.as_bytes();
    let n = b.len();
    if n > 4 && w.ends_with("ies") {
        return Some(format!("{}y", &w[..n - 3]));
    }
    if w.ends_with("sses") {
        return Some(w[..n - 2].to_string());
    }
    if n > 4 && (w.ends_with("ches") || w.ends_with("shes")) {
        return Some(w[..n - 2].to_string());
    }
    if n > 3 && w.ends_with("xes") {
        return Some(w[..n - 2].to_string());
    }
    if n > 3 && b[n - 1] == b's' && !matches!(b[n - 2], b's' | b'u' | b'i') {
        return Some(w[..n - 1].to_string());
    }
    None
}

fn strip_gerund(w: &str) -> Option<String> {
    let stem = w.strip_suffix("ing")?;
    let sb = stem.as_bytes();
    if sb.len() < 3 || !sb.iter().any(|&c| is_vowel(c) || c == b'y') {
        return None;
    }
    let n = sb.len();
    let last = sb[n - 1];
    // running -> run, sitting -> sit
    if last == sb[n - 2] && !is_vowel(last) && !matches!(last, b'l' | b's' | b'z') {
        return Some(stem[..n - 1].to_string());
    }
    // making -> make, riding -> ride
    if n == 3 && !is_vowel(sb[0]) && is_vowel(sb[1]) && !is_vowel(last) && !matches!(last, b'w' | b'x' | b'y') {
        return Some(format!("{stem}e"));
    }
    Some(stem.to_string())
}

/// Rule-based suffix normalization: plural and gerund stripping with an
/// exception list. Applied to a fixed point, so it is idempotent.
pub fn normalize(word: &str) -> String {
    let mut current = word.to_string();
    loop {
        if !current.is_ascii() || KEEP_AS_IS.contains(&current.as_str()) {
            return current;
        }
        match strip_plural(&current).or_else(|| strip_gerund(&current)) {
            Some(next) if next.len() >= 2 && next != current => current = next,
            _ => return current,
        }
    }
}

/// Tokenizes arbitrary text with the same rules as [`preprocess`].
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() > 1 && !stopwords.contains(t))
        .map(|t| normalize(&t))
        .filter(|t| t.chars().count() > 1 && !stopwords.contains(t))
        .collect()
}

/// Concatenates title, artist, date, technique and description, then
/// tokenizes, lowercases, drops punctuation and stopwords, and normalizes suffixes.
pub fn preprocess(painting: &Painting, stopwords: &Stopwords) -> TokenizedDoc {
    let text = painting.text_fields().join(" ");
    TokenizedDoc::new(painting.id.clone(), tokenize(&text, stopwords))
}

pub fn preprocess_all(paintings: &[Painting], stopwords: &Stopwords) -> Vec<TokenizedDoc> {
    paintings.par_iter().map(|p| preprocess(p, stopwords)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from words already in id order.
    pub fn from_words(words: Vec<String>, counts: Vec<usize>) -> Self {
        assert_eq!(words.len(), counts.len());
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            words,
            counts,
            index,
        }
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, word: &str) -> Option<usize> {
        self.id(word).map(|i| self.counts[i])
    }

    /// In-vocabulary token ids of a document, in order.
    pub fn encode(&self, doc: &TokenizedDoc) -> Vec<usize> {
        doc.tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Words with corpus frequency ≥ `min_count`, ordered by (frequency desc, word asc).
pub fn build_vocabulary(docs: &[TokenizedDoc], min_count: usize) -> Result<Vocabulary, TextError> {
    if docs.is_empty() {
        return Err(TextError::NoDocuments);
    }
    let min_count = min_count.max(1);
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for t in &d.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary(min_count));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (words, counts) = kept.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
    Ok(Vocabulary::from_words(words, counts))
}
