//! Study server for the painting recommender: sessions, elicitation,
//! per-engine recommendations in randomized order, quality feedback,
//! an append-only event log and exports.
//!
//! - [`session`]: session state machine and events
//! - [`store`]: JSONL event log, snapshots, replay
//! - [`study`]: corpus + matrices + sessions behind one writer
//! - [`http`]: axum routes
//! - [`export`]: feedback and rankings tables
//! - [`config`]: TOML / environment configuration
//! - [`matrices`]: similarity-matrix loading through the cache

pub mod config;
pub mod export;
pub mod http;
pub mod matrices;
pub mod session;
pub mod store;
pub mod study;

pub use config::ServiceConfig;
pub use study::{Study, StudyError, StudyOptions};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}
