mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use artrec_core::metrics::overlap_report;
use artrec_service::export::read_rankings_csv;
use artrec_service::Study;
use axum::http::StatusCode;
use common::*;
use serde_json::json;

fn fixture_app(dir: &std::path::Path) -> axum::Router {
    let study = Study::open(&fixture_config(dir)).unwrap();
    app(Arc::new(study))
}

#[tokio::test]
async fn full_flow_on_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let app = fixture_app(dir.path());
    let created = post(&app, "/sessions", json!({ "visiting_style": "grasshopper", "gender": "f" })).await;
    assert_eq!(created.status, StatusCode::CREATED);
    let v = created.json();
    assert_eq!(v["step"], "elicitation");
    let id = v["session_id"].as_str().unwrap().to_string();

    let elic = get(&app, &format!("/sessions/{id}/elicitation")).await.json();
    let paintings = elic["paintings"].as_array().unwrap();
    assert_eq!(paintings.len(), 9);
    let corpus = fixture_corpus();
    let groups: BTreeSet<_> = paintings
        .iter()
        .map(|p| corpus.get(p["id"].as_str().unwrap()).unwrap().story_group.clone().unwrap())
        .collect();
    assert_eq!(groups.len(), 9);
    assert_eq!(get(&app, &format!("/sessions/{id}/elicitation")).await.json(), elic);

    let r = post(&app, &format!("/sessions/{id}/ratings"), ratings_body(&elic["paintings"], |i| 1 + (i as i64 % 5))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["step"], "engine_0");

    let mut engines = BTreeSet::new();
    for i in 0..5 {
        let rec = get(&app, &format!("/sessions/{id}/recommendations/{i}")).await.json();
        assert_eq!(rec["paintings"].as_array().unwrap().len(), 9);
        assert!(rec["paintings"][0]["image_ref"].as_str().unwrap().starts_with("images/"));
        let engine = rec["engine_id"].as_str().unwrap().to_string();
        engines.insert(engine.clone());
        let fb = post(
            &app,
            &format!("/sessions/{id}/feedback"),
            json!({ "engine_id": engine, "accuracy": 5, "diversity": 4, "novelty": 3, "serendipity": 2 }),
        )
        .await;
        assert_eq!(fb.status, StatusCode::OK);
    }
    assert_eq!(engines.len(), 5);
    let status = get(&app, &format!("/sessions/{id}")).await.json();
    assert_eq!(status["step"], "done");
    assert_eq!(status["complete"], true);
}

#[tokio::test]
async fn validation_and_sequencing_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = fixture_app(dir.path());

    let r = post(&app, "/sessions", json!({ "age": "40" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"].as_str().unwrap().contains("visiting_style"));
    let r = post(&app, "/sessions", json!({ "visiting_style": "owl" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, "/sessions/nope/elicitation").await.status, StatusCode::NOT_FOUND);

    let id = post(&app, "/sessions", json!({ "visiting_style": "ant" })).await.json()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/0")).await.status, StatusCode::CONFLICT);

    let elic = get(&app, &format!("/sessions/{id}/elicitation")).await.json();
    let all = ratings_body(&elic["paintings"], |_| 3);
    let mut eight = all.clone();
    let dropped = eight["ratings"].as_array_mut().unwrap().pop().unwrap();
    let r = post(&app, &format!("/sessions/{id}/ratings"), eight).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"].as_str().unwrap().contains(dropped["painting_id"].as_str().unwrap()));

    let mut six = all.clone();
    six["ratings"][0]["rating"] = json!(6);
    let r = post(&app, &format!("/sessions/{id}/ratings"), six).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"].as_str().unwrap().contains("1..=5"));

    assert_eq!(post(&app, &format!("/sessions/{id}/ratings"), all.clone()).await.status, StatusCode::OK);
    assert_eq!(post(&app, &format!("/sessions/{id}/ratings"), all).await.status, StatusCode::CONFLICT);
    assert_eq!(get(&app, &format!("/sessions/{id}/elicitation")).await.status, StatusCode::CONFLICT);

    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/1")).await.status, StatusCode::CONFLICT);
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/7")).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/x")).await.status, StatusCode::BAD_REQUEST);

    let first = get(&app, &format!("/sessions/{id}/recommendations/0")).await.json();
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/0")).await.json(), first);
    let served = first["engine_id"].as_str().unwrap();
    let other = ["lda", "bert", "resnet", "lda+resnet", "bert+resnet"]
        .into_iter()
        .find(|e| *e != served)
        .unwrap();
    let fb = |engine: &str, acc: i64| json!({ "engine_id": engine, "accuracy": acc, "diversity": 1, "novelty": 1, "serendipity": 1 });
    assert_eq!(post(&app, &format!("/sessions/{id}/feedback"), fb(other, 3)).await.status, StatusCode::CONFLICT);
    assert_eq!(post(&app, &format!("/sessions/{id}/feedback"), fb("gpt", 3)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(&app, &format!("/sessions/{id}/feedback"), fb(served, 0)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let missing_field = json!({ "engine_id": served, "accuracy": 3 });
    let r = post(&app, &format!("/sessions/{id}/feedback"), missing_field).await;
    assert!(r.status.is_client_error());
    assert_eq!(post(&app, &format!("/sessions/{id}/feedback"), fb(served, 3)).await.status, StatusCode::OK);
    assert_eq!(post(&app, &format!("/sessions/{id}/feedback"), fb(served, 3)).await.status, StatusCode::CONFLICT);
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendations/0")).await.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn export_requires_token_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let app = fixture_app(dir.path());

    let empty = call(&app, "GET", "/export?format=csv&table=feedback", None, Some(TOKEN)).await;
    assert_eq!(empty.status, StatusCode::OK);
    assert_eq!(empty.text().lines().count(), 1);
    assert!(empty.content_type.unwrap().starts_with("text/csv"));
    assert_eq!(call(&app, "GET", "/export", None, None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/export", None, Some("wrong")).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(
        call(&app, "GET", "/export?format=xml", None, Some(TOKEN)).await.status,
        StatusCode::BAD_REQUEST
    );

    complete_session(&app, "ant", |i| 1 + (i as i64 % 5)).await;
    complete_session(&app, "fish", |i| 5 - (i as i64 % 5)).await;
    // an unfinished session contributes no rankings
    post(&app, "/sessions", json!({ "visiting_style": "butterfly" })).await;

    let fb = call(&app, "GET", "/export?format=csv&table=feedback", None, Some(TOKEN)).await.text();
    assert_eq!(fb.lines().count(), 1 + 10);
    assert!(fb.lines().next().unwrap().starts_with("session_id,created_at,age,gender,visiting_style"));

    let rk = call(&app, "GET", "/export?format=csv&table=rankings", None, Some(TOKEN)).await.text();
    assert_eq!(rk.lines().count(), 1 + 2 * 5 * 9);
    let rankings = read_rankings_csv(rk.as_bytes()).unwrap();
    assert_eq!(rankings.len(), 2);
    let report = overlap_report(&rankings, 0.9).unwrap();
    assert_eq!(report.engines.len(), 5);
    assert_eq!(report.all.iou.n, 5);

    let bundle = call(&app, "GET", "/export", None, Some(TOKEN)).await.json();
    assert_eq!(bundle["feedback"].as_array().unwrap().len(), 10);
    assert_eq!(bundle["rankings"].as_object().unwrap().len(), 2);
}

#[tokio::test]
async fn export_disabled_without_token() {
    let dir = tempfile::tempdir().unwrap();
    let study = Arc::new(Study::open(&fixture_config(dir.path())).unwrap());
    let app = artrec_service::http::api_router(study, None);
    assert_eq!(call(&app, "GET", "/export", None, Some("x")).await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&app, "/healthz").await.status, StatusCode::OK);
}

/// One painting per story group, so every session elicits the same nine.
fn forced_elicitation_study(dir: &std::path::Path) -> Arc<Study> {
    use artrec_core::{Corpus, Painting};
    let paintings = (0..40)
        .map(|i| {
            let p = Painting::new(format!("P{i:02}"), format!("Painting {i}"));
            if i < 9 {
                p.with_story_group(format!("g{i}"))
            } else {
                p
            }
        })
        .collect();
    let corpus = Corpus::new(paintings).unwrap();
    let matrices = synthetic_matrices(&corpus, 6);
    Arc::new(Study::new(corpus, matrices, options(dir, 0)).unwrap())
}

#[tokio::test]
async fn equal_ratings_equal_rankings_different_ratings_differ() {
    let dir = tempfile::tempdir().unwrap();
    let study = forced_elicitation_study(dir.path());
    let app = app(study.clone());
    let mut ids = Vec::new();
    for rule in [|i: usize| 1 + (i as i64 % 5), |i: usize| 1 + (i as i64 % 5), |i: usize| 5 - (i as i64 % 5)] {
        let id = post(&app, "/sessions", json!({ "visiting_style": "fish" })).await.json()["session_id"]
            .as_str()
            .unwrap()
            .to_string();
        let e = get(&app, &format!("/sessions/{id}/elicitation")).await.json();
        assert_eq!(post(&app, &format!("/sessions/{id}/ratings"), ratings_body(&e["paintings"], rule)).await.status, StatusCode::OK);
        ids.push(id);
    }
    let s: Vec<_> = ids.iter().map(|id| study.session(id).unwrap()).collect();
    assert_eq!(s[0].elicitation, s[1].elicitation);
    assert_ne!(s[0].engine_order, s[1].engine_order, "ids differ so orders are drawn independently");
    assert_eq!(s[0].rankings, s[1].rankings);
    assert!(s[0].rankings.iter().any(|(e, r)| s[2].rankings[e] != *r));
}
