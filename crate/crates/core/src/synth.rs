//! Seeded synthetic data: planted-topic documents, Gaussian blobs, grouped
//! corpora and embeddings. Used for fixtures, benchmarks and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Painting};
use crate::embed::EmbeddingSet;
use crate::textprep::TokenizedDoc;

/// Documents drawn from disjoint per-topic vocabularies. Word `w{t}_{j}` belongs
/// to topic `t`. Returns docs and their planted topic labels.
pub fn planted_corpus(
    topics: usize,
    words_per_topic: usize,
    docs_per_topic: usize,
    doc_len: usize,
    seed: u64,
) -> (Vec<TokenizedDoc>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(topics * docs_per_topic);
    let mut labels = Vec::with_capacity(topics * docs_per_topic);
    for i in 0..topics * docs_per_topic {
        // interleave labels so document order carries no signal
        let t = i % topics;
        let tokens = (0..doc_len)
            .map(|_| planted_word(t, rng.gen_range(0..words_per_topic)))
            .collect();
        docs.push(TokenizedDoc::new(format!("doc{i:03}"), tokens));
        labels.push(t);
    }
    (docs, labels)
}

pub fn planted_word(topic: usize, j: usize) -> String {
    format!("w{topic}_{j:02}")
}

/// Topic of a planted word, if it has the `w{t}_{j}` shape.
pub fn planted_topic_of(word: &str) -> Option<usize> {
    word.strip_prefix('w')?.split_once('_')?.0.parse().ok()
}

/// `n_per` points around each center with isotropic standard deviation `spread`.
/// Ids are `b{blob}_{i}`.
pub fn gaussian_blobs(centers: &[Vec<f64>], n_per: usize, spread: f64, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).expect("finite spread");
    let rows = centers.iter().enumerate().flat_map(|(b, c)| {
        (0..n_per)
            .map(|i| {
                let v: Vec<f64> = c.iter().map(|x| x + noise.sample(&mut rng)).collect();
                (format!("b{b}_{i:02}"), v)
            })
            .collect::<Vec<_>>()
    });
    EmbeddingSet::new("synthetic", rows).expect("blob points are finite and nonzero")
}

/// A corpus of `m` paintings spread round-robin over `groups` story groups,
/// with the last `uncategorized` paintings left without a group.
pub fn grouped_corpus(m: usize, groups: usize, uncategorized: usize, seed: u64) -> Corpus {
    const SUBJECTS: &[&str] = &[
        "saint", "virgin", "landscape", "river", "portrait", "still life", "battle", "harbour",
        "angel", "feast", "shepherd", "flowers", "mythology", "ruins", "storm", "market",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paintings = (0..m)
        .map(|i| {
            let subject = SUBJECTS[i % groups.max(1) % SUBJECTS.len()];
            let extra = SUBJECTS.choose(&mut rng).unwrap();
            let mut p = Painting::new(format!("NG{i:04}"), format!("{subject} study {i}"))
                .with_description(format!("A painting of {subject} with {extra} in the background."));
            p.artist = format!("Artist {}", i % 37);
            p.date = format!("{}", 1400 + (i * 7) % 500);
            p.technique = "Oil on canvas".into();
            p.image_ref = format!("images/NG{i:04}.jpg");
            if groups > 0 && i < m.saturating_sub(uncategorized) {
                p = p.with_story_group(format!("story-{:02}", i % groups));
            }
            p
        })
        .collect();
    Corpus::new(paintings).expect("synthetic corpus is valid")
}

/// Embeddings with shared structure per story group: a group centroid plus
/// Gaussian noise. Uncategorized paintings get a random centroid.
pub fn grouped_embeddings(corpus: &Corpus, engine: &str, dim: usize, noise: f64, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let jitter = Normal::new(0.0, noise).unwrap();
    let groups: Vec<&str> = corpus.story_groups().collect();
    let centroids: Vec<Vec<f64>> = (0..=groups.len())
        .map(|_| (0..dim).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let rows = corpus.paintings().iter().map(|p| {
        let g = p
            .story_group
            .as_deref()
            .and_then(|s| groups.iter().position(|x| *x == s))
            .unwrap_or(groups.len());
        let mut v: Vec<f64> = centroids[g].iter().map(|c| c + jitter.sample(&mut rng)).collect();
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        (p.id.clone(), v)
    });
    EmbeddingSet::new(engine, rows).expect("finite nonzero vectors")
}

/// Independent standard-normal vectors for the given ids.
pub fn random_embeddings(ids: &[String], engine: &str, dim: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let rows = ids.iter().map(|id| {
        let mut v: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        (id.clone(), v)
    });
    EmbeddingSet::new(engine, rows).expect("finite nonzero vectors")
}
