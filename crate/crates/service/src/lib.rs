//! HTTP review service over a session corpus.
//!
//! Serves angle traces and on-demand detections for supervisor-chosen
//! parameters, runs parameter sweeps as background jobs, and records
//! accept/reject decisions in an append-only JSON-lines log.

mod corpus;
mod decisions;
mod error;
mod jobs;
mod query;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use poseguard_core::detector::{
    detect, global_stats, window_means, DetectionReport, DetectorParams,
};
use poseguard_core::eval::{sweep, DEFAULT_TARGET_LABEL};
use poseguard_core::session::{AngleSeries, SessionBundle};
use serde::Serialize;
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use tracing::info;

pub use corpus::{find_manifests, load_corpus, Corpus, SessionSummary};
pub use decisions::{
    accepted_labels_csv, decisions_csv, DecisionLog, DecisionRequest, ReviewDecision, Verdict,
    DECISIONS_HEADER,
};
pub use error::{ApiError, ApiResult};
pub use jobs::{Job, JobState};

use query::Query;

/// Detection cache entries kept before the cache is cleared.
const CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus_dir: PathBuf,
    /// Defaults to `decisions.jsonl` inside the corpus directory.
    pub decisions_log: Option<PathBuf>,
    /// Concurrent detection and sweep jobs.
    pub jobs: usize,
    /// Static review UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            corpus_dir: corpus_dir.into(),
            decisions_log: None,
            jobs: 4,
            ui_dir: None,
        }
    }

    pub fn decisions_path(&self) -> PathBuf {
        self.decisions_log
            .clone()
            .unwrap_or_else(|| self.corpus_dir.join("decisions.jsonl"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot read corpus directory {path}: {source}")]
    Corpus {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot open decisions log {path}: {source}")]
    Decisions {
        path: PathBuf,
        source: std::io::Error,
    },
}

type CacheKey = (
    String,
    u64,
    u32,
    poseguard_core::detector::WindowUnit,
    u32,
    u64,
);

struct AppState {
    corpus: Corpus,
    decisions: Arc<Mutex<DecisionLog>>,
    cache: Mutex<HashMap<CacheKey, Arc<Vec<u8>>>>,
    pool: Arc<Semaphore>,
    jobs: jobs::Jobs,
}

type Shared = Arc<AppState>;

/// Load the corpus, replay the decisions log and build the router.
pub async fn build_app(config: &ServiceConfig) -> Result<Router, StartupError> {
    let dir = config.corpus_dir.clone();
    let corpus = tokio::task::spawn_blocking(move || load_corpus(&dir))
        .await
        .expect("corpus loader panicked")
        .map_err(|source| StartupError::Corpus {
            path: config.corpus_dir.clone(),
            source,
        })?;
    let log_path = config.decisions_path();
    let log = DecisionLog::open(&log_path).map_err(|source| StartupError::Decisions {
        path: log_path,
        source,
    })?;
    info!(
        sessions = corpus.sessions.len(),
        unreadable = corpus.summaries.len() - corpus.sessions.len(),
        decisions = log.entries().len(),
        "corpus loaded"
    );
    let state = Arc::new(AppState {
        corpus,
        decisions: Arc::new(Mutex::new(log)),
        cache: Mutex::new(HashMap::new()),
        pool: Arc::new(Semaphore::new(config.jobs.max(1))),
        jobs: jobs::Jobs::default(),
    });

    let api = Router::new()
        .route("/api/sessions", get(list_sessions))
        .route("/api/sessions/{id}/angles", get(angles))
        .route("/api/sessions/{id}/windows", get(windows))
        .route("/api/sessions/{id}/events", get(events))
        .route(
            "/api/sessions/{id}/decisions",
            get(list_decisions).post(post_decision),
        )
        .route("/api/export/decisions.csv", get(export_decisions))
        .route("/api/sweep", get(start_sweep))
        .route("/api/sweep/{job_id}", get(poll_sweep))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(state);

    let router = match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder_ui)),
    };
    Ok(router)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn placeholder_ui() -> Html<&'static str> {
    Html(
        "<!doctype html><title>poseguard review</title>\
         <p>No UI bundle configured. The JSON API is under <code>/api/</code>.</p>",
    )
}

fn session(state: &AppState, id: &str) -> ApiResult<Arc<SessionBundle>> {
    state
        .corpus
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no readable session {id:?}")))
}

fn angle_series(bundle: &SessionBundle) -> ApiResult<&AngleSeries> {
    bundle.angles.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "insufficient_data",
            "session has no angle series",
        )
    })
}

/// Run CPU-bound work on the blocking pool, bounded by the job semaphore.
async fn bounded<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    let _permit = state
        .pool
        .clone()
        .acquire_owned()
        .await
        .expect("pool never closes");
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn list_sessions(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "sessions": state.corpus.summaries }))
}

#[derive(Serialize)]
struct Trace {
    session_id: String,
    fps: f64,
    downsample: usize,
    frame: Vec<u64>,
    t: Vec<f64>,
    yaw: Vec<f64>,
    pitch: Vec<f64>,
    roll: Vec<f64>,
    stats: poseguard_core::detector::PerAngleStats,
    labels: Vec<poseguard_core::session::EventInterval>,
}

async fn angles(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(q): UrlQuery<Query>,
) -> ApiResult<Json<Trace>> {
    let k = query::downsample(&q)?;
    let bundle = session(&state, &id)?;
    bounded(&state, move || {
        let series = angle_series(&bundle)?;
        let stats = global_stats(series)?;
        let mut trace = Trace {
            session_id: bundle.session_id.clone(),
            fps: series.fps,
            downsample: k,
            frame: Vec::new(),
            t: Vec::new(),
            yaw: Vec::new(),
            pitch: Vec::new(),
            roll: Vec::new(),
            stats,
            labels: bundle.labels.clone(),
        };
        for s in series.samples().iter().filter(|s| s.valid).step_by(k) {
            trace.frame.push(s.frame_index);
            trace.t.push(s.timestamp);
            trace.yaw.push(s.yaw);
            trace.pitch.push(s.pitch);
            trace.roll.push(s.roll);
        }
        Ok(Json(trace))
    })
    .await
}

async fn windows(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(q): UrlQuery<Query>,
) -> ApiResult<Json<serde_json::Value>> {
    let (params, k) = query::window_params(&q)?;
    let bundle = session(&state, &id)?;
    bounded(&state, move || {
        let series = angle_series(&bundle)?;
        let mut windowed = window_means(series, &params)?;
        windowed.windows = windowed.windows.into_iter().step_by(k).collect();
        Ok(Json(json!({
            "session_id": bundle.session_id,
            "fps": series.fps,
            "params": params,
            "downsample": k,
            "local_average": windowed,
        })))
    })
    .await
}

fn cache_key(id: &str, p: &DetectorParams) -> CacheKey {
    (
        id.to_string(),
        p.n.to_bits(),
        p.w,
        p.window_unit,
        p.stride,
        p.min_window_coverage.to_bits(),
    )
}

fn json_bytes(body: Arc<Vec<u8>>, cache: &'static str) -> Response {
    Response::builder()
        .header(header::CONTENT_TYPE, "application/json")
        .header("x-cache", cache)
        .body(Body::from(body.as_ref().clone()))
        .expect("static headers are valid")
}

async fn events(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(q): UrlQuery<Query>,
) -> ApiResult<Response> {
    let params = query::detector_params(&q)?;
    let bundle = session(&state, &id)?;
    let key = cache_key(&id, &params);
    if let Some(hit) = state.cache.lock().unwrap().get(&key).cloned() {
        return Ok(json_bytes(hit, "hit"));
    }
    let body = bounded(&state, move || {
        let series = angle_series(&bundle)?;
        let result = detect(series, &params)?;
        Ok(Arc::new(
            DetectionReport::new(series, result).to_json_bytes(),
        ))
    })
    .await?;
    let mut cache = state.cache.lock().unwrap();
    if cache.len() >= CACHE_LIMIT {
        cache.clear();
    }
    cache.insert(key, body.clone());
    Ok(json_bytes(body, "miss"))
}

async fn list_decisions(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    session(&state, &id)?;
    let log = state.decisions.lock().unwrap();
    let all: Vec<&ReviewDecision> = log
        .entries()
        .iter()
        .filter(|d| d.session_id == id)
        .collect();
    let latest: Vec<&ReviewDecision> = log
        .latest()
        .into_iter()
        .filter(|d| d.session_id == id)
        .collect();
    Ok(Json(
        json!({ "session_id": id, "decisions": all, "latest": latest }),
    ))
}

async fn post_decision(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> ApiResult<(StatusCode, Json<ReviewDecision>)> {
    session(&state, &id)?;
    let req: DecisionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid decision body: {e}")))?;
    req.check().map_err(ApiError::bad_request)?;
    let log = state.decisions.clone();
    // the lock is the single writer; entries are ordered by acquisition
    let decision = tokio::task::spawn_blocking(move || {
        let mut log = log.lock().unwrap();
        log.append(&id, req)
            .map_err(|e| ApiError::internal(format!("cannot write {}: {e}", log.path().display())))
    })
    .await
    .map_err(|e| ApiError::internal(format!("writer failed: {e}")))??;
    Ok((StatusCode::CREATED, Json(decision)))
}

async fn export_decisions(
    State(state): State<Shared>,
    UrlQuery(q): UrlQuery<Query>,
) -> ApiResult<Response> {
    let format = q.get("format").map(String::as_str).unwrap_or("decisions");
    if let Some(bad) = q
        .keys()
        .find(|k| !["format", "session", "label"].contains(&k.as_str()))
    {
        return Err(ApiError::bad_request(format!(
            "unknown query parameter {bad}"
        )));
    }
    let log = state.decisions.lock().unwrap();
    let latest = log.latest();
    let body = match format {
        "decisions" => decisions_csv(&latest),
        "labels" => {
            let sid = q
                .get("session")
                .ok_or_else(|| ApiError::bad_request("format=labels needs a session parameter"))?;
            let label = q
                .get("label")
                .map(String::as_str)
                .unwrap_or(DEFAULT_TARGET_LABEL);
            accepted_labels_csv(&latest, sid, label)
        }
        other => {
            return Err(ApiError::bad_request(format!(
                "format must be `decisions` or `labels`, got {other:?}"
            )))
        }
    };
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

async fn start_sweep(
    State(state): State<Shared>,
    UrlQuery(q): UrlQuery<Query>,
) -> ApiResult<Response> {
    let config = query::sweep_config(&q)?;
    let (job_id, created) = state.jobs.get_or_create(&config);
    if created {
        let state = state.clone();
        let id = job_id.clone();
        tokio::spawn(async move {
            let sessions = state.corpus.readable();
            let cfg = config.clone();
            let outcome = bounded(&state, move || Ok(sweep(&sessions, &cfg))).await;
            let job_state = match outcome {
                Ok(Ok(grid)) => JobState::Done { grid },
                Ok(Err(e)) => JobState::Failed {
                    error: e.to_string(),
                },
                Err(e) => JobState::Failed { error: e.message },
            };
            state.jobs.finish(&id, job_state);
        });
    }
    let status = state.jobs.get(&job_id).map(|j| j.state);
    let status = match status {
        Some(JobState::Running) | None => "running",
        Some(JobState::Done { .. }) => "done",
        Some(JobState::Failed { .. }) => "failed",
    };
    let body =
        json!({ "job_id": job_id, "status": status, "poll": format!("/api/sweep/{job_id}") });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn poll_sweep(
    State(state): State<Shared>,
    UrlPath(job_id): UrlPath<String>,
) -> ApiResult<Json<Job>> {
    state
        .jobs
        .get(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no sweep job {job_id:?}")))
}
