//! Loading the three base similarity matrices, through the on-disk cache.

use std::path::{Path, PathBuf};

use artrec_core::embed::{build_similarity, load_embeddings, EmbedError, SimilarityMatrix};
use artrec_core::recsys::{EngineMatrices, RecError};
use artrec_core::{Corpus, Engine};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("engine {engine}: {source}")]
    Embed {
        engine: Engine,
        #[source]
        source: EmbedError,
    },
    #[error("engine {0}: no embeddings path configured and no usable cache")]
    NoSource(Engine),
    #[error(transparent)]
    Rec(#[from] RecError),
}

pub fn cache_path(cache_dir: &Path, engine: Engine) -> PathBuf {
    cache_dir.join(format!("{}.sim", engine.as_str()))
}

/// Rounds entries through f32 so a freshly built matrix ranks exactly like
/// its cached copy.
pub fn quantize(m: SimilarityMatrix) -> SimilarityMatrix {
    let values = m.values().iter().map(|&x| x as f32 as f64).collect();
    SimilarityMatrix::from_parts(m.engine_id.clone(), m.ids().to_vec(), values).expect("same shape")
}

/// Uses the cache when its id manifest matches the corpus; otherwise builds
/// from embeddings and refreshes the cache.
pub fn load_or_build(
    engine: Engine,
    embeddings: Option<&Path>,
    corpus: &Corpus,
    cache_dir: Option<&Path>,
) -> Result<SimilarityMatrix, MatrixError> {
    let wrap = |source| MatrixError::Embed { engine, source };
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, engine);
        if path.exists() {
            match SimilarityMatrix::load_cache(&path) {
                Ok(m) if m.ids().iter().map(String::as_str).eq(corpus.ids()) => {
                    tracing::info!(%engine, path = %path.display(), "using cached similarity matrix");
                    return Ok(m);
                }
                Ok(_) => tracing::warn!(%engine, "cached matrix does not match corpus; rebuilding"),
                Err(e) => tracing::warn!(%engine, error = %e, "unreadable matrix cache; rebuilding"),
            }
        }
    }
    let path = embeddings.ok_or(MatrixError::NoSource(engine))?;
    let set = load_embeddings(path, corpus).map_err(wrap)?;
    let mut m = build_similarity(&set).map_err(wrap)?;
    m.engine_id = engine.as_str().to_string();
    let m = quantize(m);
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(|source| {
            wrap(EmbedError::Io {
                path: dir.display().to_string(),
                source,
            })
        })?;
        m.save_cache(cache_path(dir, engine)).map_err(wrap)?;
    }
    Ok(m)
}

pub fn load_all(
    paths: [Option<&Path>; 3],
    corpus: &Corpus,
    cache_dir: Option<&Path>,
) -> Result<EngineMatrices, MatrixError> {
    let mut out = EngineMatrices::new();
    for (engine, path) in Engine::BASE.into_iter().zip(paths) {
        out.insert(engine, load_or_build(engine, path, corpus, cache_dir)?)?;
    }
    Ok(out)
}
