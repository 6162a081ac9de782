//! Topic words for the sentence-embedding engine: linear dimensionality
//! reduction, cutoff single-linkage clustering with a noise rule, and
//! class-based TF-IDF over the resulting clusters.
//!
//! These outputs are for interpretation only; the engine's similarity matrix
//! is built from the raw embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingSet;
use crate::textprep::TokenizedDoc;

#[derive(Debug, Error, PartialEq)]
pub enum CtfidfError {
    #[error("target dimension {target} must be below the input dimension {dim}")]
    TargetTooLarge { target: usize, dim: usize },
    #[error("need at least {needed} vectors (got {got})")]
    TooFewVectors { needed: usize, got: usize },
    #[error("every point ended up as noise")]
    NoClusters,
    #[error("cutoff quantile must be in [0, 1] (got {0})")]
    InvalidQuantile(f64),
    #[error("no tokenized document for painting {0:?}")]
    MissingDoc(String),
    #[error("cluster {0} has no tokens")]
    EmptyCluster(usize),
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Cluster(usize),
    Noise,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Cluster(c) => write!(f, "{c}"),
            Label::Noise => f.write_str("noise"),
        }
    }
}

/// How N in c-TF-IDF is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NMode {
    /// Average token count per cluster.
    #[default]
    Average,
    /// Token count of the cluster being scored.
    PerClassTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtfidfConfig {
    pub target_dim: usize,
    pub min_cluster_size: usize,
    pub cutoff_quantile: f64,
    pub n_mode: NMode,
    /// Logarithm base; `None` means natural log.
    pub log_base: Option<f64>,
}

impl Default for CtfidfConfig {
    fn default() -> Self {
        Self {
            target_dim: 5,
            min_cluster_size: 10,
            cutoff_quantile: 0.25,
            n_mode: NMode::Average,
            log_base: None,
        }
    }
}

/// Centered projection onto the top `target_dim` principal directions.
/// Each direction is signed so its largest-magnitude component is positive.
pub fn reduce_dim(embeddings: &EmbeddingSet, target_dim: usize) -> Result<EmbeddingSet, CtfidfError> {
    let (n, dim) = (embeddings.len(), embeddings.dim);
    if target_dim == 0 || target_dim >= dim {
        return Err(CtfidfError::TargetTooLarge { target: target_dim, dim });
    }
    if n < target_dim + 1 {
        return Err(CtfidfError::TooFewVectors {
            needed: target_dim + 1,
            got: n,
        });
    }
    let mut x = DMatrix::from_fn(n, dim, |i, j| embeddings.vectors()[i][j]);
    for j in 0..dim {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let directions = principal_directions(&x, target_dim);
    let projected = &x * &directions;
    let vectors = (0..n)
        .map(|i| projected.row(i).iter().copied().collect())
        .collect();
    // A point on the centroid projects to the zero vector, which is fine here.
    Ok(EmbeddingSet::from_raw(
        embeddings.engine_id.clone(),
        target_dim,
        embeddings.ids().to_vec(),
        vectors,
    ))
}

/// dim × target matrix of unit principal directions of centered `x` (n × dim).
fn principal_directions(x: &DMatrix<f64>, target: usize) -> DMatrix<f64> {
    let (n, dim) = x.shape();
    let mut dirs = if dim <= n {
        let cov = x.transpose() * x;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        DMatrix::from_fn(dim, target, |r, c| eig.eigenvectors[(r, order[c])])
    } else {
        // Gram route: v = Xᵀu / ‖Xᵀu‖.
        let gram = x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        let mut d = DMatrix::zeros(dim, target);
        for (c, &o) in order.iter().take(target).enumerate() {
            let u = eig.eigenvectors.column(o);
            let v = x.transpose() * u;
            let norm = v.norm();
            if norm > 0.0 {
                d.set_column(c, &(v / norm));
            }
        }
        d
    };
    for c in 0..target {
        let col = dirs.column(c);
        let mut best = 0;
        for r in 1..dim {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            dirs.column_mut(c).neg_mut();
        }
    }
    dirs
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    pub fn label_of(&self, id: &str) -> Option<Label> {
        self.ids.iter().position(|x| x == id).map(|i| self.labels[i])
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.labels)
            .filter(move |(_, l)| **l == Label::Cluster(cluster))
            .map(|(id, _)| id.as_str())
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Noise).count()
    }
}

/// Noise points within this multiple of the cutoff of a cluster join it.
pub const BORDER_FACTOR: f64 = 2.0;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage components of the graph joining points closer than the
/// `cutoff_quantile` of all pairwise Euclidean distances. Components smaller
/// than `min_cluster_size` are dropped; their points join the nearest
/// surviving cluster when within `BORDER_FACTOR` times the cutoff and are noise
/// otherwise. Labels follow descending cluster size, ties by earliest member.
pub fn cluster(
    reduced: &EmbeddingSet,
    min_cluster_size: usize,
    cutoff_quantile: f64,
) -> Result<ClusterAssignment, CtfidfError> {
    let n = reduced.len();
    let min_cluster_size = min_cluster_size.max(1);
    if n < min_cluster_size || n < 2 {
        return Err(CtfidfError::TooFewVectors {
            needed: min_cluster_size.max(2),
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&cutoff_quantile) {
        return Err(CtfidfError::InvalidQuantile(cutoff_quantile));
    }
    let v = reduced.vectors();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((dist(&v[i], &v[j]), i, j));
        }
    }
    let mut dists: Vec<f64> = edges.iter().map(|e| e.0).collect();
    dists.sort_by(f64::total_cmp);
    let rank = ((cutoff_quantile * dists.len() as f64).ceil() as usize).clamp(1, dists.len());
    let cutoff = dists[rank - 1];

    let mut parent: Vec<usize> = (0..n).collect();
    for &(d, i, j) in &edges {
        if d <= cutoff {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        comps.entry(root).or_default().push(i);
    }
    let mut kept: Vec<Vec<usize>> = comps.into_values().filter(|c| c.len() >= min_cluster_size).collect();
    if kept.is_empty() {
        return Err(CtfidfError::NoClusters);
    }
    // Border pass: a straggler close to a cluster joins it rather than
    // becoming noise. Decided against the core clusters only, so order of
    // attachment does not matter.
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (c, members) in kept.iter().enumerate() {
        for &i in members {
            owner[i] = Some(c);
        }
    }
    let radius = BORDER_FACTOR * cutoff;
    let mut joins = Vec::new();
    for i in (0..n).filter(|&i| owner[i].is_none()) {
        let nearest = (0..n)
            .filter_map(|j| owner[j].map(|c| (dist(&v[i], &v[j]), j, c)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, _, c)) = nearest {
            if d <= radius {
                joins.push((i, c));
            }
        }
    }
    for (i, c) in joins {
        kept[c].push(i);
    }
    for members in kept.iter_mut() {
        members.sort_unstable();
    }
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut labels = vec![Label::Noise; n];
    for (c, members) in kept.iter().enumerate() {
        for &i in members {
            labels[i] = Label::Cluster(c);
        }
    }
    Ok(ClusterAssignment {
        ids: reduced.ids().to_vec(),
        labels,
        num_clusters: kept.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicWordScores {
    /// Per cluster, (word, score) sorted by score desc then word asc.
    pub clusters: Vec<Vec<(String, f64)>>,
}

/// c-TF-IDF(w, C) = f_{w,C} · log(1 + N / f_w), with f_{w,C} the share of C's
/// tokens that are w, f_w the count of w over all clustered tokens, and N per
/// [`NMode`]. Noise documents are ignored.
pub fn ctfidf_scores(
    docs: &[TokenizedDoc],
    assignment: &ClusterAssignment,
    config: &CtfidfConfig,
) -> Result<TopicWordScores, CtfidfError> {
    let by_id: HashMap<&str, &TokenizedDoc> = docs.iter().map(|d| (d.painting_id.as_str(), d)).collect();
    let c = assignment.num_clusters;
    let mut class_counts: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); c];
    let mut class_totals = vec![0usize; c];
    let mut global: HashMap<&str, usize> = HashMap::new();
    for (id, label) in assignment.ids.iter().zip(&assignment.labels) {
        let Label::Cluster(k) = *label else { continue };
        let doc = by_id.get(id.as_str()).ok_or_else(|| CtfidfError::MissingDoc(id.clone()))?;
        for t in &doc.tokens {
            *class_counts[k].entry(t.as_str()).or_default() += 1;
            *global.entry(t.as_str()).or_default() += 1;
            class_totals[k] += 1;
        }
    }
    if let Some(k) = class_totals.iter().position(|&t| t == 0) {
        return Err(CtfidfError::EmptyCluster(k));
    }
    let average = class_totals.iter().sum::<usize>() as f64 / c as f64;
    let log = |x: f64| match config.log_base {
        None => x.ln(),
        Some(b) => x.log(b),
    };
    let clusters = (0..c)
        .map(|k| {
            let total = class_totals[k] as f64;
            let n = match config.n_mode {
                NMode::Average => average,
                NMode::PerClassTotal => total,
            };
            let mut scored: Vec<(String, f64)> = class_counts[k]
                .iter()
                .map(|(&w, &count)| {
                    let f_wc = count as f64 / total;
                    let f_w = global[w] as f64;
                    (w.to_string(), f_wc * log(1.0 + n / f_w))
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            scored
        })
        .collect();
    Ok(TopicWordScores { clusters })
}

/// Closed-form score for one word; the building block of [`ctfidf_scores`].
pub fn ctfidf_value(count_in_class: usize, class_tokens: usize, count_overall: usize, n: f64) -> f64 {
    if count_in_class == 0 {
        return 0.0;
    }
    count_in_class as f64 / class_tokens as f64 * (1.0 + n / count_overall as f64).ln()
}

/// The first `top_n` entries of a cluster's sorted score list.
pub fn topic_words(scores: &TopicWordScores, cluster: usize, top_n: usize) -> Result<&[(String, f64)], CtfidfError> {
    let list = scores.clusters.get(cluster).ok_or(CtfidfError::UnknownCluster(cluster))?;
    Ok(&list[..top_n.min(list.len())])
}
