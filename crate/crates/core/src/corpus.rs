//! Painting collection: loading, validation, story groups and elicitation sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate painting id {0:?}")]
    DuplicateId(String),
    #[error("corpus must contain ≥ 2 paintings (found {0})")]
    TooSmall(usize),
    #[error("corpus has no story groups to sample from")]
    NoStoryGroups,
}

/// One artwork with its catalogue metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Painting {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub artist: String,
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub technique: String,
    #[serde(default)]
    pub description: String,
    /// Curated story label. Empty string in the file means uncategorized.
    #[serde(
        default,
        serialize_with = "ser_story_group",
        deserialize_with = "de_story_group"
    )]
    pub story_group: Option<String>,
    #[serde(default)]
    pub image_ref: String,
}

fn ser_story_group<S: serde::Serializer>(v: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.as_deref().unwrap_or(""))
}

fn de_story_group<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    Ok(raw.filter(|s| !s.trim().is_empty()))
}

impl Painting {
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            artist: String::new(),
            date: String::new(),
            technique: String::new(),
            description: String::new(),
            story_group: None,
            image_ref: String::new(),
        }
    }

    pub fn with_story_group(mut self, group: impl Into<String>) -> Self {
        let g = group.into();
        self.story_group = if g.is_empty() { None } else { Some(g) };
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    /// Text fields in their fixed concatenation order.
    pub fn text_fields(&self) -> [&str; 5] {
        [
            &self.title,
            &self.artist,
            &self.date,
            &self.technique,
            &self.description,
        ]
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() && self.description.trim().is_empty() {
            return Err(format!("painting {:?} has neither title nor description", self.id));
        }
        Ok(())
    }
}

/// An immutable, validated painting collection in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    paintings: Vec<Painting>,
    index: HashMap<String, usize>,
    story_groups: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn new(paintings: Vec<Painting>) -> Result<Self, CorpusError> {
        if paintings.len() < 2 {
            return Err(CorpusError::TooSmall(paintings.len()));
        }
        let mut index = HashMap::with_capacity(paintings.len());
        let mut story_groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, p) in paintings.iter().enumerate() {
            p.validate()
                .map_err(|reason| CorpusError::Malformed { line: i + 1, reason })?;
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
            if let Some(g) = &p.story_group {
                story_groups.entry(g.clone()).or_default().push(i);
            }
        }
        Ok(Self {
            paintings,
            index,
            story_groups,
        })
    }

    pub fn len(&self) -> usize {
        self.paintings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paintings.is_empty()
    }

    pub fn paintings(&self) -> &[Painting] {
        &self.paintings
    }

    pub fn get(&self, id: &str) -> Option<&Painting> {
        self.index.get(id).map(|&i| &self.paintings[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.paintings.iter().map(|p| p.id.as_str())
    }

    /// Distinct non-empty story labels, sorted.
    pub fn story_groups(&self) -> impl Iterator<Item = &str> {
        self.story_groups.keys().map(String::as_str)
    }

    pub fn story_group_members(&self, label: &str) -> Option<impl Iterator<Item = &Painting>> {
        self.story_groups
            .get(label)
            .map(|ix| ix.iter().map(|&i| &self.paintings[i]))
    }
}

/// Reads a line-delimited JSON corpus. Blank lines are skipped; line numbers
/// in errors are 1-based file lines.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut paintings = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Painting = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        p.validate()
            .map_err(|reason| CorpusError::Malformed { line: i + 1, reason })?;
        if seen.insert(p.id.clone(), i + 1).is_some() {
            return Err(CorpusError::DuplicateId(p.id));
        }
        paintings.push(p);
    }
    Corpus::new(paintings)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for p in corpus.paintings() {
        let line = serde_json::to_string(p).expect("painting serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// One uniformly drawn painting per story group, groups in label order.
/// Uncategorized paintings are never drawn.
pub fn sample_elicitation(corpus: &Corpus, seed: u64) -> Result<Vec<&Painting>, CorpusError> {
    if corpus.story_groups.is_empty() {
        return Err(CorpusError::NoStoryGroups);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(corpus
        .story_groups
        .values()
        .map(|members| &corpus.paintings[members[rng.gen_range(0..members.len())]])
        .collect())
}

/// Labels of paintings, used to check that sampled sets span distinct groups.
pub fn distinct_groups<'a>(paintings: impl IntoIterator<Item = &'a Painting>) -> BTreeSet<&'a str> {
    paintings
        .into_iter()
        .filter_map(|p| p.story_group.as_deref())
        .collect()
}
