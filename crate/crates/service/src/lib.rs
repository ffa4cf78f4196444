//! HTTP service that hands record pairs to judges, stores their answers, and
//! exposes the latest Pareto sweep for a session.
//!
//! Endpoints:
//!
//! | method | path                         | body / query                 |
//! |--------|------------------------------|------------------------------|
//! | GET    | `/health`                    |                              |
//! | GET    | `/sessions/{id}/pairs`       | `?judge_id=…&count=…`        |
//! | POST   | `/sessions/{id}/judgments`   | `{judge_id, i, j, same}`     |
//! | GET    | `/sessions/{id}/results`     |                              |
//!
//! Anything else falls through to the static UI bundle when one is
//! configured. Pair payloads carry feature values and row indices only;
//! labels are never serialized.

pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use tower_http::services::ServeDir;

use subfair_core::{CurveRow, JudgeResponse};

pub use session::{constraint_digest, create_session, Session, SessionConfig, SweepRecord};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("pair ({i}, {j}) was not presented to this judge")]
    NotPresented { i: usize, j: usize },
    #[error("pair ({i}, {j}) already answered by this judge")]
    Duplicate { i: usize, j: usize },
    #[error("no results: no sweep has been run for this session")]
    NoResults,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] subfair_core::Error),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownSession(_) | Self::NoResults => StatusCode::NOT_FOUND,
            Self::BadRequest(_) | Self::NotPresented { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Duplicate { .. } => StatusCode::CONFLICT,
            Self::Io { .. } | Self::Core(_) | Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

/// Shared state: the sessions root and every session opened so far. Each
/// session sits behind its own mutex, which serializes log writes.
#[derive(Clone)]
pub struct AppState {
    root: PathBuf,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            sessions: Arc::default(),
        }
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        if let Some(s) = self.sessions.read().await.get(id) {
            return Ok(s.clone());
        }
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        let dir = self.root.join(id);
        if !valid || !dir.join(session::CONFIG_FILE).is_file() {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let mut sessions = self.sessions.write().await;
        if let Some(s) = sessions.get(id) {
            return Ok(s.clone());
        }
        let opened = tokio::task::spawn_blocking(move || Session::open(&dir))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))??;
        let s = Arc::new(Mutex::new(opened));
        sessions.insert(id.to_string(), s.clone());
        Ok(s)
    }
}

pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions/{id}/pairs", get(get_pairs))
        .route("/sessions/{id}/judgments", post(post_judgment))
        .route("/sessions/{id}/results", get(get_results))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

#[derive(Debug, Deserialize)]
pub struct PairsQuery {
    pub judge_id: String,
    pub count: Option<usize>,
}

/// One record as shown to a judge: feature name to value.
#[derive(Debug, Serialize, Deserialize)]
pub struct RecordView {
    pub index: usize,
    pub features: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairView {
    pub i: usize,
    pub j: usize,
    pub left: RecordView,
    pub right: RecordView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairsResponse {
    pub session_id: String,
    pub judge_id: String,
    pub pairs: Vec<PairView>,
}

async fn get_pairs(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PairsQuery>,
) -> Result<Json<PairsResponse>, ServiceError> {
    if q.judge_id.is_empty() {
        return Err(ServiceError::BadRequest("judge_id must be non-empty".into()));
    }
    let session = state.session(&id).await?;
    let session = session.lock().await;
    let budget = session.config.pairs_per_judge;
    let count = q.count.unwrap_or(budget);
    if count > budget {
        return Err(ServiceError::BadRequest(format!(
            "count {count} exceeds the per-judge budget of {budget}"
        )));
    }
    let ds = &session.dataset;
    let view = |index: usize| RecordView {
        index,
        features: ds
            .feature_names()
            .iter()
            .cloned()
            .zip(ds.row(index).iter().copied())
            .collect(),
    };
    let pairs = session
        .assignment(&q.judge_id)
        .into_iter()
        .take(count)
        .map(|(i, j)| PairView {
            i,
            j,
            left: view(i),
            right: view(j),
        })
        .collect();
    Ok(Json(PairsResponse {
        session_id: id,
        judge_id: q.judge_id,
        pairs,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub log_length: usize,
}

async fn post_judgment(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(response): Json<JudgeResponse>,
) -> Result<(StatusCode, Json<Ack>), ServiceError> {
    let session = state.session(&id).await?;
    let mut session = session.lock_owned().await;
    let log_length = tokio::task::spawn_blocking(move || session.record(response))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok((
        StatusCode::CREATED,
        Json(Ack {
            accepted: true,
            log_length,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultsResponse {
    pub session_id: String,
    pub rows: Vec<CurveRow>,
    /// "Same" answers per judge, recounted from the log.
    pub judge_counts: BTreeMap<String, usize>,
    /// Digest of the constraints the sweep consumed.
    pub sweep_constraints_digest: String,
    /// Digest of the constraints the current log rebuilds to.
    pub log_constraints_digest: String,
}

async fn get_results(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ResultsResponse>, ServiceError> {
    let session = state.session(&id).await?;
    let session = session.lock().await;
    let sweep = session.sweep()?.ok_or(ServiceError::NoResults)?;
    Ok(Json(ResultsResponse {
        session_id: id,
        rows: sweep.rows,
        judge_counts: session.judge_counts(),
        sweep_constraints_digest: sweep.constraints_digest,
        log_constraints_digest: constraint_digest(&session.constraints()?),
    }))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(
    addr: std::net::SocketAddr,
    root: PathBuf,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, root = %root.display(), "serving");
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(root), ui_dir.as_deref())).await
}
