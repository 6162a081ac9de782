//! Engine-tagged embedding files and the cosine similarity matrix built from them.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("painting {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("painting {0:?} is not in the corpus")]
    UnknownPainting(String),
    #[error("painting {0:?} appears twice")]
    DuplicatePainting(String),
    #[error("painting {0:?} has a non-finite component")]
    NonFinite(String),
    #[error("painting {0:?} has a zero vector")]
    ZeroVector(String),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("embedding set is empty")]
    Empty,
    #[error("embedding set does not cover painting {0:?}")]
    MissingPainting(String),
    #[error("similarity cache: {0}")]
    Cache(String),
}

/// Dense vectors for a set of paintings, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub engine_id: String,
    pub dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    /// Validates rows (shared dimension, finite, nonzero, distinct ids).
    pub fn new(
        engine_id: impl Into<String>,
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbedError> {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        let mut seen = HashSet::new();
        let mut dim = None;
        for (id, v) in rows {
            let expected = *dim.get_or_insert(v.len());
            check_row(&id, &v, expected)?;
            if !seen.insert(id.clone()) {
                return Err(EmbedError::DuplicatePainting(id));
            }
            ids.push(id);
            vectors.push(v);
        }
        let dim = dim.ok_or(EmbedError::Empty)?;
        if dim == 0 {
            return Err(EmbedError::Empty);
        }
        Ok(Self {
            engine_id: engine_id.into(),
            dim,
            ids,
            vectors,
        })
    }

    /// No validation; used for derived sets (e.g. projections) where zero
    /// vectors are legitimate.
    pub(crate) fn from_raw(engine_id: String, dim: usize, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Self {
        Self {
            engine_id,
            dim,
            ids,
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.vectors[i].as_slice())
    }

    /// Restricts and reorders to corpus order; every corpus painting must be present.
    pub fn aligned_to(&self, corpus: &Corpus) -> Result<Self, EmbedError> {
        let pos: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut ids = Vec::with_capacity(corpus.len());
        let mut vectors = Vec::with_capacity(corpus.len());
        for id in corpus.ids() {
            let &i = pos.get(id).ok_or_else(|| EmbedError::MissingPainting(id.to_string()))?;
            ids.push(id.to_string());
            vectors.push(self.vectors[i].clone());
        }
        Ok(Self {
            engine_id: self.engine_id.clone(),
            dim: self.dim,
            ids,
            vectors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        let io = |source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "#engine={} dim={}", self.engine_id, self.dim).map_err(io)?;
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            let cols: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{id}\t{}", cols.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn check_row(id: &str, v: &[f64], expected: usize) -> Result<(), EmbedError> {
    if v.len() != expected {
        return Err(EmbedError::DimensionMismatch {
            id: id.to_string(),
            expected,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::NonFinite(id.to_string()));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(EmbedError::ZeroVector(id.to_string()));
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<(String, usize), String> {
    let body = line.strip_prefix('#').ok_or("missing '#engine=<id> dim=<d>' header")?;
    let mut engine = None;
    let mut dim = None;
    for part in body.split_whitespace() {
        if let Some(e) = part.strip_prefix("engine=") {
            engine = Some(e.to_string());
        } else if let Some(d) = part.strip_prefix("dim=") {
            dim = Some(d.parse::<usize>().map_err(|e| format!("bad dim: {e}"))?);
        }
    }
    match (engine, dim) {
        (Some(e), Some(d)) if !e.is_empty() && d >= 1 => Ok((e, d)),
        _ => Err("header must carry engine=<id> and dim=<d ≥ 1>".into()),
    }
}

/// Reads `painting_id<TAB>v1,v2,…` rows under a `#engine=<id> dim=<d>` header.
/// Rows come back in corpus order.
pub fn load_embeddings(path: impl AsRef<Path>, corpus: &Corpus) -> Result<EmbeddingSet, EmbedError> {
    let path = path.as_ref();
    let io = |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines().enumerate();
    let (engine, dim) = loop {
        match lines.next() {
            Some((i, l)) => {
                let l = l.map_err(io)?;
                if l.trim().is_empty() {
                    continue;
                }
                break parse_header(l.trim()).map_err(|reason| EmbedError::Malformed { line: i + 1, reason })?;
            }
            None => return Err(EmbedError::Empty),
        }
    };
    let mut rows: Vec<(usize, String, Vec<f64>)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, l) in lines {
        let l = l.map_err(io)?;
        if l.trim().is_empty() {
            continue;
        }
        let (id, values) = l.split_once('\t').ok_or_else(|| EmbedError::Malformed {
            line: i + 1,
            reason: "expected painting_id<TAB>values".into(),
        })?;
        let v: Vec<f64> = values
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EmbedError::Malformed {
                line: i + 1,
                reason: format!("painting {id:?}: {e}"),
            })?;
        check_row(id, &v, dim)?;
        let pos = corpus
            .position(id)
            .ok_or_else(|| EmbedError::UnknownPainting(id.to_string()))?;
        if !seen.insert(id.to_string()) {
            return Err(EmbedError::DuplicatePainting(id.to_string()));
        }
        rows.push((pos, id.to_string(), v));
    }
    rows.sort_by_key(|r| r.0);
    let mut set = EmbeddingSet::new(engine, rows.into_iter().map(|(_, id, v)| (id, v)))?;
    set.dim = dim;
    Ok(set)
}

/// dot(u,v) / (‖u‖‖v‖).
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Symmetric m×m cosine similarity table, row-major, rows in `ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub engine_id: String,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_parts(engine_id: impl Into<String>, ids: Vec<String>, values: Vec<f64>) -> Result<Self, EmbedError> {
        let m = ids.len();
        if values.len() != m * m {
            return Err(EmbedError::Cache(format!("{} values for {m} ids", values.len())));
        }
        let index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        if index.len() != m {
            return Err(EmbedError::Cache("duplicate ids in manifest".into()));
        }
        Ok(Self {
            engine_id: engine_id.into(),
            ids,
            index,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.ids.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Versioned binary cache: magic, version, engine id, id manifest, then
    /// m×m little-endian f32 values row-major.
    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        let path = path.as_ref();
        let io = |source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
        write_str(&mut w, &self.engine_id).map_err(io)?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes()).map_err(io)?;
        for id in &self.ids {
            write_str(&mut w, id).map_err(io)?;
        }
        for &x in &self.values {
            w.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let io = |source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CACHE_MAGIC {
            return Err(EmbedError::Cache("bad magic".into()));
        }
        let version = read_u32(&mut r).map_err(io)?;
        if version != CACHE_VERSION {
            return Err(EmbedError::Cache(format!("unsupported version {version}")));
        }
        let engine = read_str(&mut r).map_err(io)?;
        let m = read_u32(&mut r).map_err(io)? as usize;
        let ids = (0..m).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>().map_err(io)?;
        let mut buf = vec![0u8; m * m * 4];
        r.read_exact(&mut buf).map_err(io)?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_parts(engine, ids, values)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"ARTSIM\0\0";
const CACHE_VERSION: u32 = 1;

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// A_ij = cosine(p_i, p_j). Rows are computed in parallel, each with a fixed
/// sequential reduction order; the lower triangle mirrors the upper one.
pub fn build_similarity(set: &EmbeddingSet) -> Result<SimilarityMatrix, EmbedError> {
    let m = set.len();
    if m == 0 {
        return Err(EmbedError::Empty);
    }
    let norms: Vec<f64> = set
        .vectors
        .iter()
        .zip(&set.ids)
        .map(|(v, id)| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                Err(EmbedError::ZeroVector(id.clone()))
            } else {
                Ok(n)
            }
        })
        .collect::<Result<_, _>>()?;
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let u = &set.vectors[i];
            (i..m)
                .map(|j| {
                    let dot: f64 = u.iter().zip(&set.vectors[j]).map(|(a, b)| a * b).sum();
                    (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; m * m];
    for (i, row) in upper.iter().enumerate() {
        for (off, &x) in row.iter().enumerate() {
            let j = i + off;
            values[i * m + j] = x;
            values[j * m + i] = x;
        }
    }
    SimilarityMatrix::from_parts(set.engine_id.clone(), set.ids.clone(), values)
}
