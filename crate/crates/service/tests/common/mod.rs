#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use artrec_core::recsys::{EngineMatrices, FusionMode};
use artrec_core::synth::{grouped_corpus, grouped_embeddings};
use artrec_core::{build_similarity, load_corpus, Corpus, Engine};
use artrec_service::config::{EmbeddingPaths, ServiceConfig};
use artrec_service::http::{api_router, ADMIN_TOKEN_HEADER};
use artrec_service::{Study, StudyOptions};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "letmein";

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Config pointing at the shipped sample corpus and fixture embeddings.
pub fn fixture_config(data_dir: &Path) -> ServiceConfig {
    let root = repo_root();
    ServiceConfig {
        corpus: root.join("data/sample_corpus.jsonl"),
        embeddings: EmbeddingPaths {
            lda: Some(root.join("data/fixtures/lda.tsv")),
            bert: Some(root.join("data/fixtures/bert.tsv")),
            resnet: Some(root.join("data/fixtures/resnet.tsv")),
        },
        cache_dir: Some(data_dir.join("cache")),
        data_dir: data_dir.join("log"),
        admin_token: Some(TOKEN.into()),
        durable: false,
        ..ServiceConfig::default()
    }
}

pub fn fixture_corpus() -> Corpus {
    load_corpus(repo_root().join("data/sample_corpus.jsonl")).unwrap()
}

pub fn synthetic_matrices(corpus: &Corpus, dim: usize) -> EngineMatrices {
    let mut m = EngineMatrices::new();
    for (i, e) in Engine::BASE.into_iter().enumerate() {
        let set = grouped_embeddings(corpus, e.as_str(), dim, 0.7, 100 + i as u64);
        m.insert(e, build_similarity(&set).unwrap()).unwrap();
    }
    m
}

pub fn options(data_dir: &Path, snapshot_every: u64) -> StudyOptions {
    StudyOptions {
        r: 9,
        fusion: FusionMode::WeightedRrSum,
        seed: 11,
        data_dir: data_dir.to_path_buf(),
        snapshot_every,
        durable: false,
    }
}

pub fn synthetic_study(m: usize, data_dir: &Path, snapshot_every: u64) -> Study {
    let corpus = grouped_corpus(m, 9, 3, 7);
    let matrices = synthetic_matrices(&corpus, 8);
    Study::new(corpus, matrices, options(data_dir, snapshot_every)).unwrap()
}

pub fn app(study: Arc<Study>) -> Router {
    api_router(study, Some(TOKEN))
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
    pub content_type: Option<String>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, admin: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = admin {
        req = req.header(ADMIN_TOKEN_HEADER, t);
    }
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .map(String::from);
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        body,
        content_type,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, "POST", uri, Some(body), None).await
}

/// Deterministic ratings for an elicitation list: `f(i)` for the i-th item.
pub fn ratings_body(paintings: &Value, f: impl Fn(usize) -> i64) -> Value {
    let items: Vec<Value> = paintings
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, p)| serde_json::json!({ "painting_id": p["id"], "rating": f(i) }))
        .collect();
    serde_json::json!({ "ratings": items })
}

/// Runs one participant through the whole study over HTTP. Returns the
/// session id and the 5 lists in served order.
pub async fn complete_session(app: &Router, style: &str, rate: impl Fn(usize) -> i64) -> (String, Vec<(String, Vec<String>)>) {
    let created = post(app, "/sessions", serde_json::json!({ "visiting_style": style, "age": 30 })).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.text());
    let id = created.json()["session_id"].as_str().unwrap().to_string();
    let elic = get(app, &format!("/sessions/{id}/elicitation")).await.json();
    let r = post(app, &format!("/sessions/{id}/ratings"), ratings_body(&elic["paintings"], rate)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let mut lists = Vec::new();
    for i in 0..5 {
        let rec = get(app, &format!("/sessions/{id}/recommendations/{i}")).await;
        assert_eq!(rec.status, StatusCode::OK, "{}", rec.text());
        let v = rec.json();
        let engine = v["engine_id"].as_str().unwrap().to_string();
        let ids = v["paintings"].as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap().to_string()).collect();
        let fb = post(
            app,
            &format!("/sessions/{id}/feedback"),
            serde_json::json!({ "engine_id": engine, "accuracy": 4, "diversity": 3, "novelty": 2, "serendipity": 5 }),
        )
        .await;
        assert_eq!(fb.status, StatusCode::OK, "{}", fb.text());
        lists.push((engine, ids));
    }
    (id, lists)
}
