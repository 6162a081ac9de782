//! JSON API over a [`Study`], plus static files for the web UI and images.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::export;
use crate::session::{Demographics, Feedback, SessionError};
use crate::study::{Study, StudyError};

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "code": self.code }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        use SessionError as S;
        let (status, code) = match &e {
            StudyError::Session(s) => match s {
                S::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                S::MissingVisitingStyle
                | S::InvalidVisitingStyle(_)
                | S::MissingRatings(_)
                | S::UnexpectedRating(_)
                | S::DuplicateRating(_)
                | S::RatingOutOfRange { .. }
                | S::FeedbackOutOfRange { .. }
                | S::UnknownEngine(_)
                | S::IndexOutOfRange(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
                S::AlreadyRated
                | S::RatingsRequired
                | S::OutOfOrder { .. }
                | S::AlreadyReviewed(_)
                | S::EngineNotServed(_)
                | S::DuplicateFeedback(_)
                | S::Complete => (StatusCode::CONFLICT, "sequence"),
                S::Inconsistent { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            },
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError::new(status, code, e.to_string())
    }
}

fn bad_json(e: JsonRejection) -> ApiError {
    ApiError::new(e.status(), "bad_request", e.body_text())
}

#[derive(Clone)]
struct AppState {
    study: Arc<Study>,
    admin_digest: Option<[u8; 32]>,
}

/// Accepts age as either a JSON number or string.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Loose {
    Num(serde_json::Number),
    Text(String),
}

impl Loose {
    fn into_string(self) -> String {
        match self {
            Loose::Num(n) => n.to_string(),
            Loose::Text(s) => s,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    age: Option<Loose>,
    gender: Option<String>,
    visiting_style: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RatingItem {
    painting_id: String,
    rating: i64,
}

#[derive(Debug, Deserialize)]
struct RatingsRequest {
    ratings: Vec<RatingItem>,
}

#[derive(Debug, Deserialize)]
struct FeedbackRequest {
    engine_id: String,
    accuracy: i64,
    diversity: i64,
    novelty: i64,
    serendipity: i64,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
    table: Option<String>,
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, StudyError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn create_session(
    State(st): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let demographics = Demographics {
        age: req.age.map(Loose::into_string).filter(|s| !s.trim().is_empty()),
        gender: req.gender.filter(|s| !s.trim().is_empty()),
    };
    let study = st.study.clone();
    let status = blocking(move || study.create_session(demographics, req.visiting_style.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(status)))
}

async fn session_status(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(st.study.status(&id)?))
}

async fn elicitation(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let paintings = st.study.elicitation(&id)?;
    Ok(Json(json!({ "session_id": id, "paintings": paintings })))
}

async fn submit_ratings(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RatingsRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let ratings: Vec<(String, i64)> = req.ratings.into_iter().map(|r| (r.painting_id, r.rating)).collect();
    let study = st.study.clone();
    let status = blocking(move || study.submit_ratings(&id, &ratings)).await?;
    Ok(Json(status))
}

async fn recommendations(
    State(st): State<AppState>,
    path: Result<Path<(String, usize)>, PathRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Path((id, index)) = path.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let study = st.study.clone();
    Ok(Json(blocking(move || study.recommendations(&id, index)).await?))
}

async fn submit_feedback(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let feedback = Feedback::new(req.accuracy, req.diversity, req.novelty, req.serendipity).map_err(StudyError::from)?;
    let study = st.study.clone();
    let status = blocking(move || study.submit_feedback(&id, &req.engine_id, feedback)).await?;
    Ok(Json(status))
}

fn token_digest(token: &str) -> [u8; 32] {
    Sha256::digest(token.as_bytes()).into()
}

async fn export_handler(
    State(st): State<AppState>,
    headers: HeaderMap,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Some(expected) = st.admin_digest else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "export is disabled: no admin token configured"));
    };
    let given = headers.get(ADMIN_TOKEN_HEADER).and_then(|v| v.to_str().ok());
    // compare digests so the check does not leak a matching prefix length
    if given.map(token_digest) != Some(expected) {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token"));
    }
    let Query(q) = query.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let sessions = st.study.sessions();
    let format = q.format.as_deref().unwrap_or("json");
    let table = q.table.as_deref().unwrap_or("feedback");
    let internal = |e: export::ExportError| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string());
    match (format, table) {
        ("json", _) => Ok(Json(export::bundle(&sessions)).into_response()),
        ("csv", "feedback") => {
            let body = export::feedback_csv(&sessions).map_err(internal)?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
        }
        ("csv", "rankings") => {
            let body = export::rankings_csv(&sessions).map_err(internal)?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
        }
        _ => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_request",
            format!("unsupported export format={format} table={table}"),
        )),
    }
}

async fn health() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

/// API routes only.
pub fn api_router(study: Arc<Study>, admin_token: Option<&str>) -> Router {
    let state = AppState {
        study,
        admin_digest: admin_token.map(token_digest),
    };
    Router::new()
        .route("/healthz", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/elicitation", get(elicitation))
        .route("/sessions/{id}/ratings", post(submit_ratings))
        .route("/sessions/{id}/recommendations/{index}", get(recommendations))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/export", get(export_handler))
        .with_state(state)
}

/// API plus static serving of images and the UI bundle per the config.
pub fn router(study: Arc<Study>, cfg: &ServiceConfig) -> Router {
    let mut app = api_router(study, cfg.admin_token.as_deref());
    if let Some(dir) = &cfg.images_dir {
        app = app.nest_service("/images", ServeDir::new(dir));
    }
    if let Some(dir) = &cfg.static_dir {
        app = app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}

/// Runs the server until Ctrl-C, then writes a final snapshot.
pub async fn serve(cfg: ServiceConfig) -> Result<(), crate::ServeError> {
    let study = Arc::new(tokio::task::block_in_place(|| Study::open(&cfg))?);
    let app = router(study.clone(), &cfg);
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| crate::ServeError::Bind { addr: addr.clone(), source })?;
    tracing::info!(%addr, paintings = study.corpus().len(), "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| crate::ServeError::Bind { addr, source })?;
    study.snapshot()?;
    Ok(())
}
