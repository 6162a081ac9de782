//! Content-based painting recommendation.
//!
//! Paintings are embedded by three engines (LDA topic mixtures over catalogue
//! text, sentence embeddings, and visual CNN features). Each engine yields a
//! cosine similarity matrix; a user's elicited ratings bias that matrix into a
//! per-painting score, and the text and image engines are combined by
//! reciprocal-rank late fusion.
//!
//! Modules:
//! - [`corpus`]: painting collection and elicitation sampling
//! - [`textprep`]: tokenization, suffix normalization, vocabulary
//! - [`lda`]: collapsed Gibbs LDA and topic coherence
//! - [`ctfidf`]: reduce / cluster / class-based TF-IDF topic words
//! - [`embed`]: embedding files and similarity matrices
//! - [`recsys`]: scoring, recommendation and fusion
//! - [`metrics`]: IoU, rank-biased overlap and overlap reports
//! - [`synth`]: seeded synthetic corpora and embeddings

pub mod corpus;
pub mod ctfidf;
pub mod embed;
pub mod lda;
pub mod metrics;
pub mod recsys;
pub mod synth;
pub mod textprep;

pub use corpus::{load_corpus, sample_elicitation, save_corpus, Corpus, Painting};
pub use embed::{build_similarity, cosine, load_embeddings, EmbeddingSet, SimilarityMatrix};
pub use lda::{train_lda, LdaConfig, LdaModel};
pub use recsys::{Engine, EngineMatrices, FusionMode, Ranking, UserRatings};
