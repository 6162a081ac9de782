//! LDA topic model trained by collapsed Gibbs sampling, with document-topic
//! embeddings and pairwise-cosine topic coherence.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{TokenizedDoc, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("number of topics must be ≥ 2 (got {0})")]
    TooFewTopics(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidConfig(String),
    #[error("no documents to train on")]
    NoDocuments,
    #[error("document {0:?} has no in-vocabulary tokens")]
    EmptyDocument(String),
    #[error("k = {k} exceeds the total token count {tokens}")]
    TooManyTopics { k: usize, tokens: usize },
    #[error("unknown painting id {0:?}")]
    UnknownPainting(String),
    #[error("n_top must be in 2..={vocab} (got {n_top})")]
    InvalidTopN { n_top: usize, vocab: usize },
    #[error("empty k range")]
    EmptyRange,
    #[error("model file {path}: {reason}")]
    Persist { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_k(10)
    }
}

impl LdaConfig {
    /// Defaults for a given topic count: α = 50/k, β = 0.01, 1000 sweeps, 500 burn-in.
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            burn_in: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        if self.k < 2 {
            return Err(LdaError::TooFewTopics(self.k));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(LdaError::InvalidConfig(format!("alpha must be > 0 (got {})", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(LdaError::InvalidConfig(format!("beta must be > 0 (got {})", self.beta)));
        }
        if self.iterations == 0 {
            return Err(LdaError::InvalidConfig("iterations must be ≥ 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(LdaError::InvalidConfig(format!(
                "burn_in ({}) must be < iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Trained model. `doc_topic` is m×k and `topic_word` is k×V, both row-major
/// and row-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub vocabulary: Vocabulary,
    pub doc_ids: Vec<String>,
    doc_topic: Vec<f64>,
    topic_word: Vec<f64>,
    #[serde(skip)]
    doc_index: HashMap<String, usize>,
}

impl LdaModel {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn theta(&self, doc: usize) -> &[f64] {
        let k = self.k();
        &self.doc_topic[doc * k..(doc + 1) * k]
    }

    pub fn phi(&self, topic: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.topic_word[topic * v..(topic + 1) * v]
    }

    pub fn doc_topic(&self) -> &[f64] {
        &self.doc_topic
    }

    pub fn topic_word(&self) -> &[f64] {
        &self.topic_word
    }

    /// The θ row used as this painting's embedding.
    pub fn doc_embedding(&self, painting_id: &str) -> Result<&[f64], LdaError> {
        self.doc_index
            .get(painting_id)
            .map(|&i| self.theta(i))
            .ok_or_else(|| LdaError::UnknownPainting(painting_id.to_string()))
    }

    /// Word ids of a topic ordered by P(w|t) desc, ties by word id asc.
    pub fn top_word_ids(&self, topic: usize, n: usize) -> Vec<usize> {
        let phi = self.phi(topic);
        let mut ids: Vec<usize> = (0..phi.len()).collect();
        ids.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }

    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(&str, f64)> {
        self.top_word_ids(topic, n)
            .into_iter()
            .map(|w| (self.vocabulary.word(w), self.phi(topic)[w]))
            .collect()
    }

    fn reindex(&mut self) {
        self.doc_index = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        self.vocabulary.reindex();
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LdaError> {
        let path = path.as_ref();
        let err = |reason: String| LdaError::Persist {
            path: path.display().to_string(),
            reason,
        };
        let file = File::create(path).map_err(|e| err(e.to_string()))?;
        let mut w = BufWriter::new(file);
        let doc = PersistedModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(&mut w, &doc).map_err(|e| err(e.to_string()))?;
        w.flush().map_err(|e| err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LdaError> {
        let path = path.as_ref();
        let err = |reason: String| LdaError::Persist {
            path: path.display().to_string(),
            reason,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let doc: PersistedModel =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| err(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(err(format!("unsupported format version {}", doc.format_version)));
        }
        let mut model = doc.model;
        let k = model.config.k;
        if model.doc_topic.len() != model.doc_ids.len() * k
            || model.topic_word.len() != k * model.vocabulary.len()
        {
            return Err(err("matrix shapes do not match header".into()));
        }
        model.reindex();
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    format_version: u32,
    model: LdaModel,
}

/// Count tables of the collapsed sampler.
pub(crate) struct GibbsState {
    k: usize,
    v: usize,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsState {
    pub(crate) fn init(docs: Vec<Vec<usize>>, k: usize, v: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u32; k];
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, words)| {
                words
                    .iter()
                    .map(|&w| {
                        let t = rng.gen_range(0..k);
                        doc_topic[d * k + t] += 1;
                        topic_word[t * v + w] += 1;
                        topic_total[t] += 1;
                        t
                    })
                    .collect()
            })
            .collect();
        Self {
            k,
            v,
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_total,
            rng,
            weights: vec![0.0; k],
        }
    }

    /// One full sweep resampling every token's topic from its conditional.
    pub(crate) fn sweep(&mut self, alpha: f64, beta: f64) {
        let (k, v) = (self.k, self.v);
        let v_beta = v as f64 * beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d * k + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.doc_topic[d * k + t] as f64 + alpha)
                        * (self.topic_word[t * v + w] as f64 + beta)
                        / (self.topic_total[t] as f64 + v_beta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.assignments[d][i] = new;
                self.doc_topic[d * k + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    pub(crate) fn topic_word_mass(&self) -> u64 {
        self.topic_word.iter().map(|&c| c as u64).sum()
    }

    pub(crate) fn token_count(&self) -> u64 {
        self.docs.iter().map(|d| d.len() as u64).sum()
    }
}

/// Trains LDA by collapsed Gibbs sampling. θ and P(w|t) come from count
/// tables averaged over the post-burn-in sweeps, smoothed by α and β.
pub fn train_lda(docs: &[TokenizedDoc], vocab: &Vocabulary, config: LdaConfig) -> Result<LdaModel, LdaError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(LdaError::NoDocuments);
    }
    let encoded: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| {
            let ids = vocab.encode(d);
            if ids.is_empty() {
                Err(LdaError::EmptyDocument(d.painting_id.clone()))
            } else {
                Ok(ids)
            }
        })
        .collect::<Result<_, _>>()?;
    let tokens: usize = encoded.iter().map(Vec::len).sum();
    if config.k > tokens {
        return Err(LdaError::TooManyTopics {
            k: config.k,
            tokens,
        });
    }

    let (k, v, m) = (config.k, vocab.len(), docs.len());
    let doc_lens: Vec<usize> = encoded.iter().map(Vec::len).collect();
    let mut state = GibbsState::init(encoded, k, v, config.seed);
    let mut acc_doc_topic = vec![0.0f64; m * k];
    let mut acc_topic_word = vec![0.0f64; k * v];
    for sweep in 0..config.iterations {
        state.sweep(config.alpha, config.beta);
        debug_assert_eq!(state.topic_word_mass(), state.token_count());
        if sweep >= config.burn_in {
            for (a, &c) in acc_doc_topic.iter_mut().zip(&state.doc_topic) {
                *a += c as f64;
            }
            for (a, &c) in acc_topic_word.iter_mut().zip(&state.topic_word) {
                *a += c as f64;
            }
        }
    }
    let samples = (config.iterations - config.burn_in) as f64;

    let mut doc_topic = vec![0.0; m * k];
    for d in 0..m {
        let denom = doc_lens[d] as f64 + k as f64 * config.alpha;
        let row = &mut doc_topic[d * k..(d + 1) * k];
        for t in 0..k {
            row[t] = (acc_doc_topic[d * k + t] / samples + config.alpha) / denom;
        }
        renormalize(row);
    }
    let mut topic_word = vec![0.0; k * v];
    for t in 0..k {
        let avg: Vec<f64> = acc_topic_word[t * v..(t + 1) * v].iter().map(|c| c / samples).collect();
        let denom = avg.iter().sum::<f64>() + v as f64 * config.beta;
        let row = &mut topic_word[t * v..(t + 1) * v];
        for w in 0..v {
            row[w] = (avg[w] + config.beta) / denom;
        }
        renormalize(row);
    }

    let mut model = LdaModel {
        config,
        vocabulary: vocab.clone(),
        doc_ids: docs.iter().map(|d| d.painting_id.clone()).collect(),
        doc_topic,
        topic_word,
        doc_index: HashMap::new(),
    };
    model.reindex();
    Ok(model)
}

fn renormalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coherence {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

/// Per-word document-occurrence count vectors over `docs`, keyed by vocabulary id.
fn occurrence_vectors(vocab: &Vocabulary, docs: &[TokenizedDoc], words: &[usize]) -> Vec<Vec<f64>> {
    let slot: HashMap<usize, usize> = words.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut vecs = vec![vec![0.0; docs.len()]; words.len()];
    for (d, doc) in docs.iter().enumerate() {
        for t in &doc.tokens {
            if let Some(s) = vocab.id(t).and_then(|w| slot.get(&w)) {
                vecs[*s][d] += 1.0;
            }
        }
    }
    vecs
}

fn pairwise_cosine_sum(vecs: &[Vec<f64>]) -> f64 {
    let norms: Vec<f64> = vecs.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut total = 0.0;
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                total += dot / (norms[i] * norms[j]);
            }
        }
    }
    total
}

/// Sum of pairwise cosine similarities between the occurrence vectors of
/// `words`. Words absent from the vocabulary contribute zero vectors.
pub fn word_set_coherence(vocab: &Vocabulary, docs: &[TokenizedDoc], words: &[&str]) -> f64 {
    let ids: Vec<usize> = words.iter().filter_map(|w| vocab.id(w)).collect();
    pairwise_cosine_sum(&occurrence_vectors(vocab, docs, &ids))
}

/// Coherence of each topic's `n_top` most probable words, and their mean.
pub fn topic_coherence(model: &LdaModel, docs: &[TokenizedDoc], n_top: usize) -> Result<Coherence, LdaError> {
    let vocab = model.vocab_size();
    if n_top < 2 || n_top > vocab {
        return Err(LdaError::InvalidTopN { n_top, vocab });
    }
    let per_topic: Vec<f64> = (0..model.k())
        .map(|t| {
            let ids = model.top_word_ids(t, n_top);
            pairwise_cosine_sum(&occurrence_vectors(&model.vocabulary, docs, &ids))
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(Coherence { per_topic, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_coherence: f64,
}

/// Trains one model per k (same seed, α rescaled to 50/k unless overridden)
/// and reports mean coherence per k. Models train in parallel.
pub fn coherence_sweep(
    docs: &[TokenizedDoc],
    vocab: &Vocabulary,
    k_range: std::ops::RangeInclusive<usize>,
    base: LdaConfig,
    n_top: usize,
    keep_alpha: bool,
) -> Result<Vec<SweepRow>, LdaError> {
    let ks: Vec<usize> = k_range.collect();
    if ks.is_empty() {
        return Err(LdaError::EmptyRange);
    }
    ks.par_iter()
        .map(|&k| {
            let config = LdaConfig {
                k,
                alpha: if keep_alpha { base.alpha } else { 50.0 / k as f64 },
                ..base
            };
            let model = train_lda(docs, vocab, config)?;
            let c = topic_coherence(&model, docs, n_top.min(model.vocab_size()))?;
            Ok(SweepRow {
                k,
                mean_coherence: c.mean,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,mean_coherence\n");
    for r in rows {
        out.push_str(&format!("{},{:.6}\n", r.k, r.mean_coherence));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocabulary;

    fn doc(id: &str, toks: &[&str]) -> TokenizedDoc {
        TokenizedDoc::new(id, toks.iter().map(|s| s.to_string()).collect())
    }

    fn small() -> (Vec<TokenizedDoc>, Vocabulary) {
        let docs = vec![
            doc("a", &["saint", "virgin", "child", "saint"]),
            doc("b", &["river", "tree", "sky", "river"]),
            doc("c", &["virgin", "saint", "angel"]),
            doc("d", &["sky", "tree", "cloud"]),
        ];
        let v = build_vocabulary(&docs, 1).unwrap();
        (docs, v)
    }

    fn quick(k: usize) -> LdaConfig {
        LdaConfig {
            k,
            alpha: 0.5,
            beta: 0.1,
            iterations: 50,
            burn_in: 10,
            seed: 3,
        }
    }

    #[test]
    fn config_defaults() {
        let c = LdaConfig::default();
        assert_eq!(c.k, 10);
        assert_eq!(c.alpha, 5.0);
        assert_eq!(c.beta, 0.01);
        assert_eq!((c.iterations, c.burn_in), (1000, 500));
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(matches!(quick(1).validate(), Err(LdaError::TooFewTopics(1))));
        let mut c = quick(2);
        c.burn_in = 50;
        assert!(c.validate().is_err());
        c = quick(2);
        c.alpha = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_document_normalized() {
        let docs = vec![doc("only", &["saint", "virgin", "saint"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        let m = train_lda(&docs, &v, quick(2)).unwrap();
        let s: f64 = m.doc_embedding("only").unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rows_stochastic() {
        let (docs, v) = small();
        let m = train_lda(&docs, &v, quick(3)).unwrap();
        for d in 0..m.num_docs() {
            assert!((m.theta(d).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.theta(d).iter().all(|&x| x > 0.0));
        }
        for t in 0..m.k() {
            assert!((m.phi(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.phi(t).iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn mass_conserved_every_sweep() {
        let (docs, v) = small();
        let enc: Vec<Vec<usize>> = docs.iter().map(|d| v.encode(d)).collect();
        let mut st = GibbsState::init(enc, 3, v.len(), 11);
        let n = st.token_count();
        assert_eq!(st.topic_word_mass(), n);
        for _ in 0..25 {
            st.sweep(0.1, 0.01);
            assert_eq!(st.topic_word_mass(), n);
            assert_eq!(st.topic_total.iter().map(|&c| c as u64).sum::<u64>(), n);
            assert_eq!(st.doc_topic.iter().map(|&c| c as u64).sum::<u64>(), n);
        }
    }

    #[test]
    fn deterministic() {
        let (docs, v) = small();
        let a = train_lda(&docs, &v, quick(2)).unwrap();
        let b = train_lda(&docs, &v, quick(2)).unwrap();
        assert_eq!(a.doc_topic(), b.doc_topic());
        assert_eq!(a.topic_word(), b.topic_word());
    }

    #[test]
    fn errors() {
        let (docs, v) = small();
        let mut with_empty = docs.clone();
        with_empty.push(doc("e", &["unknownword"]));
        assert!(matches!(train_lda(&with_empty, &v, quick(2)), Err(LdaError::EmptyDocument(id)) if id == "e"));
        assert!(matches!(train_lda(&[], &v, quick(2)), Err(LdaError::NoDocuments)));
        let tiny = vec![doc("t", &["saint", "virgin"])];
        assert!(matches!(train_lda(&tiny, &v, quick(3)), Err(LdaError::TooManyTopics { .. })));
        let m = train_lda(&docs, &v, quick(2)).unwrap();
        assert!(matches!(m.doc_embedding("zzz"), Err(LdaError::UnknownPainting(_))));
    }

    #[test]
    fn coherence_identical_and_disjoint() {
        // "p" and "q" always appear together with equal counts.
        let docs = vec![doc("1", &["p", "q", "p", "q"]), doc("2", &["p", "q"]), doc("3", &["r", "s"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        assert!((word_set_coherence(&v, &docs, &["p", "q"]) - 1.0).abs() < 1e-12);
        let docs2 = vec![doc("1", &["p", "p"]), doc("2", &["q"])];
        let v2 = build_vocabulary(&docs2, 1).unwrap();
        assert_eq!(word_set_coherence(&v2, &docs2, &["p", "q"]), 0.0);
    }

    #[test]
    fn coherence_invalid_n_top() {
        let (docs, v) = small();
        let m = train_lda(&docs, &v, quick(2)).unwrap();
        assert!(topic_coherence(&m, &docs, 1).is_err());
        assert!(topic_coherence(&m, &docs, v.len() + 1).is_err());
        assert!(topic_coherence(&m, &docs, v.len()).is_ok());
    }

    #[test]
    fn coherence_invariant_to_doc_order() {
        let (docs, v) = small();
        let m = train_lda(&docs, &v, quick(2)).unwrap();
        let a = topic_coherence(&m, &docs, 3).unwrap();
        let mut rev = docs.clone();
        rev.reverse();
        let b = topic_coherence(&m, &rev, 3).unwrap();
        for (x, y) in a.per_topic.iter().zip(&b.per_topic) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (docs, v) = small();
        let m = train_lda(&docs, &v, quick(2)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        let back = LdaModel::load(f.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.doc_embedding("b").unwrap(), m.doc_embedding("b").unwrap());
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let (docs, v) = small();
        let rows = coherence_sweep(&docs, &v, 2..=4, quick(2), 3, false).unwrap();
        assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(rows.iter().all(|r| r.mean_coherence.is_finite()));
        assert_eq!(rows, coherence_sweep(&docs, &v, 2..=4, quick(2), 3, false).unwrap());
        #[allow(clippy::reversed_empty_ranges)]
        let empty = coherence_sweep(&docs, &v, 4..=2, quick(2), 3, false);
        assert!(matches!(empty, Err(LdaError::EmptyRange)));
    }
}
