//! User scoring against a similarity matrix, top-r recommendation and
//! reciprocal-rank late fusion across engines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::SimilarityMatrix;

pub const DEFAULT_R: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum RecError {
    #[error("no ratings given")]
    EmptyRatings,
    #[error("rating for {id:?} must be in 1..=5 (got {rating})")]
    RatingOutOfRange { id: String, rating: u8 },
    #[error("painting {0:?} rated twice")]
    DuplicateRating(String),
    #[error("rated painting {0:?} is not in the similarity matrix")]
    UnknownPainting(String),
    #[error("r = {r} out of range 1..={max}")]
    ROutOfRange { r: usize, max: usize },
    #[error("rankings cover different paintings")]
    RankingMismatch,
    #[error("fusion weights must be ≥ 0 and sum to 1 (got {0}, {1})")]
    InvalidWeights(f64, f64),
    #[error("no similarity matrix for engine {0}")]
    MissingMatrix(Engine),
    #[error("similarity matrices disagree on painting order")]
    MatrixMismatch,
    #[error("unknown engine {0:?}")]
    UnknownEngine(String),
    #[error("unknown fusion mode {0:?}")]
    UnknownMode(String),
}

/// The five recommendation engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "lda")]
    Lda,
    #[serde(rename = "bert")]
    Bert,
    #[serde(rename = "resnet")]
    Resnet,
    #[serde(rename = "lda+resnet")]
    LdaResnet,
    #[serde(rename = "bert+resnet")]
    BertResnet,
}

impl Engine {
    pub const ALL: [Engine; 5] = [
        Engine::Lda,
        Engine::Bert,
        Engine::Resnet,
        Engine::LdaResnet,
        Engine::BertResnet,
    ];
    pub const BASE: [Engine; 3] = [Engine::Lda, Engine::Bert, Engine::Resnet];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Lda => "lda",
            Engine::Bert => "bert",
            Engine::Resnet => "resnet",
            Engine::LdaResnet => "lda+resnet",
            Engine::BertResnet => "bert+resnet",
        }
    }

    /// The two base engines a fused engine combines.
    pub fn components(self) -> Option<(Engine, Engine)> {
        match self {
            Engine::LdaResnet => Some((Engine::Lda, Engine::Resnet)),
            Engine::BertResnet => Some((Engine::Bert, Engine::Resnet)),
            _ => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = RecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| RecError::UnknownEngine(s.to_string()))
    }
}

/// Elicited 1–5 ratings in submission order; weight ω = rating / 5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRatings {
    entries: Vec<(String, u8)>,
}

impl UserRatings {
    pub fn new(entries: impl IntoIterator<Item = (String, u8)>) -> Result<Self, RecError> {
        let entries: Vec<(String, u8)> = entries.into_iter().collect();
        if entries.is_empty() {
            return Err(RecError::EmptyRatings);
        }
        let mut seen = HashSet::new();
        for (id, r) in &entries {
            if !(1..=5).contains(r) {
                return Err(RecError::RatingOutOfRange {
                    id: id.clone(),
                    rating: *r,
                });
            }
            if !seen.insert(id.as_str()) {
                return Err(RecError::DuplicateRating(id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, u8)] {
        &self.entries
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|(x, _)| x == id)
    }

    pub fn weights(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(id, r)| (id.as_str(), rating_weight(*r)))
    }
}

pub fn rating_weight(rating: u8) -> f64 {
    rating as f64 / 5.0
}

/// A ranked list of (painting id, score), scores non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub engine_id: String,
    pub items: Vec<(String, f64)>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn truncated(mut self, r: usize) -> Self {
        self.items.truncate(r);
        self
    }

    /// Sorts by score desc, ties by id asc.
    fn sort(&mut self) {
        self.items
            .sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
}

/// S(p_i) = (1/n) Σ_j ω_j · A_ij for every painting, in matrix order.
pub fn score_paintings(matrix: &SimilarityMatrix, ratings: &UserRatings) -> Result<Vec<f64>, RecError> {
    let weighted: Vec<(&str, f64)> = ratings.weights().collect();
    weighted_scores(matrix, &weighted)
}

/// Same as [`score_paintings`] with explicit weights ω_j ∈ [0, 1].
pub fn weighted_scores(matrix: &SimilarityMatrix, weighted: &[(&str, f64)]) -> Result<Vec<f64>, RecError> {
    if weighted.is_empty() {
        return Err(RecError::EmptyRatings);
    }
    let rated: Vec<(usize, f64)> = weighted
        .iter()
        .map(|&(id, w)| {
            matrix
                .position(id)
                .map(|j| (j, w))
                .ok_or_else(|| RecError::UnknownPainting(id.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let n = rated.len() as f64;
    Ok((0..matrix.len())
        .map(|i| {
            let row = matrix.row(i);
            rated.iter().map(|&(j, w)| w * row[j]).sum::<f64>() / n
        })
        .collect())
}

/// Every unrated painting, sorted by score desc then id asc.
pub fn rank_all(matrix: &SimilarityMatrix, ratings: &UserRatings) -> Result<Ranking, RecError> {
    let scores = score_paintings(matrix, ratings)?;
    let mut ranking = Ranking {
        engine_id: matrix.engine_id.clone(),
        items: matrix
            .ids()
            .iter()
            .zip(scores)
            .filter(|(id, _)| !ratings.contains(id))
            .map(|(id, s)| (id.clone(), s))
            .collect(),
    };
    ranking.sort();
    Ok(ranking)
}

/// Top `r` unrated paintings.
pub fn recommend(matrix: &SimilarityMatrix, ratings: &UserRatings, r: usize) -> Result<Ranking, RecError> {
    let max = matrix.len().saturating_sub(ratings.len());
    if r == 0 || r > max {
        return Err(RecError::ROutOfRange { r, max });
    }
    Ok(rank_all(matrix, ratings)?.truncated(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// F(p) = wA / nA(p) + wB / nB(p)
    #[default]
    WeightedRrSum,
    /// F(p) = 1 / (nA(p) · nB(p)); weights ignored.
    PaperProduct,
}

impl FromStr for FusionMode {
    type Err = RecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted_rr_sum" | "sum" => Ok(FusionMode::WeightedRrSum),
            "paper_product" | "product" => Ok(FusionMode::PaperProduct),
            other => Err(RecError::UnknownMode(other.to_string())),
        }
    }
}

/// Reciprocal-rank fusion of two full rankings over the same paintings,
/// sliced to the first `r`. Only rank positions matter, not input scores.
pub fn fuse(
    rank_a: &Ranking,
    rank_b: &Ranking,
    weight_a: f64,
    weight_b: f64,
    r: usize,
    mode: FusionMode,
) -> Result<Ranking, RecError> {
    if !(weight_a >= 0.0 && weight_b >= 0.0 && ((weight_a + weight_b) - 1.0).abs() < 1e-9) {
        return Err(RecError::InvalidWeights(weight_a, weight_b));
    }
    let pos_b: HashMap<&str, usize> = rank_b
        .items
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i + 1))
        .collect();
    if pos_b.len() != rank_a.len() || rank_b.len() != rank_a.len() {
        return Err(RecError::RankingMismatch);
    }
    let max = rank_a.len();
    if r == 0 || r > max {
        return Err(RecError::ROutOfRange { r, max });
    }
    let items = rank_a
        .items
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let na = (i + 1) as f64;
            let nb = *pos_b.get(id.as_str()).ok_or(RecError::RankingMismatch)? as f64;
            let f = match mode {
                FusionMode::WeightedRrSum => weight_a / na + weight_b / nb,
                FusionMode::PaperProduct => 1.0 / (na * nb),
            };
            Ok((id.clone(), f))
        })
        .collect::<Result<Vec<_>, RecError>>()?;
    let mut fused = Ranking {
        engine_id: format!("{}+{}", rank_a.engine_id, rank_b.engine_id),
        items,
    };
    fused.sort();
    Ok(fused.truncated(r))
}

/// Similarity matrices for the three base engines, sharing painting order.
#[derive(Debug, Clone, Default)]
pub struct EngineMatrices {
    matrices: BTreeMap<Engine, SimilarityMatrix>,
}

impl EngineMatrices {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, engine: Engine, matrix: SimilarityMatrix) -> Result<(), RecError> {
        if engine.components().is_some() {
            return Err(RecError::UnknownEngine(format!("{engine} is not a base engine")));
        }
        if let Some(other) = self.matrices.values().next() {
            if other.ids() != matrix.ids() {
                return Err(RecError::MatrixMismatch);
            }
        }
        self.matrices.insert(engine, matrix);
        Ok(())
    }

    pub fn get(&self, engine: Engine) -> Result<&SimilarityMatrix, RecError> {
        self.matrices.get(&engine).ok_or(RecError::MissingMatrix(engine))
    }

    pub fn len(&self) -> usize {
        self.matrices.values().next().map_or(0, SimilarityMatrix::len)
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Full unrated ranking for any of the five engines; fused engines use equal weights.
pub fn engine_full_ranking(
    engine: Engine,
    ratings: &UserRatings,
    matrices: &EngineMatrices,
    mode: FusionMode,
) -> Result<Ranking, RecError> {
    match engine.components() {
        None => {
            let mut r = rank_all(matrices.get(engine)?, ratings)?;
            r.engine_id = engine.as_str().to_string();
            Ok(r)
        }
        Some((a, b)) => {
            let ra = rank_all(matrices.get(a)?, ratings)?;
            let rb = rank_all(matrices.get(b)?, ratings)?;
            let mut fused = fuse(&ra, &rb, 0.5, 0.5, ra.len(), mode)?;
            fused.engine_id = engine.as_str().to_string();
            Ok(fused)
        }
    }
}

/// Top-r lists for all five engines.
pub fn engine_rankings(
    ratings: &UserRatings,
    matrices: &EngineMatrices,
    r: usize,
    mode: FusionMode,
) -> Result<BTreeMap<Engine, Ranking>, RecError> {
    for e in Engine::BASE {
        matrices.get(e)?;
    }
    let max = matrices.len().saturating_sub(ratings.len());
    if r == 0 || r > max {
        return Err(RecError::ROutOfRange { r, max });
    }
    let base: BTreeMap<Engine, Ranking> = Engine::BASE
        .iter()
        .map(|&e| {
            let mut ranking = rank_all(matrices.get(e)?, ratings)?;
            ranking.engine_id = e.as_str().to_string();
            Ok((e, ranking))
        })
        .collect::<Result<_, RecError>>()?;
    let mut out = BTreeMap::new();
    for e in Engine::ALL {
        let ranking = match e.components() {
            None => base[&e].clone().truncated(r),
            Some((a, b)) => {
                let mut f = fuse(&base[&a], &base[&b], 0.5, 0.5, r, mode)?;
                f.engine_id = e.as_str().to_string();
                f
            }
        };
        out.insert(e, ranking);
    }
    Ok(out)
}
