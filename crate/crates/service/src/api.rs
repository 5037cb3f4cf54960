//! JSON API over the store, plus optional static hosting of the curator UI.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use homonym_core::ranking::ProfileDetail;
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use crate::store::{RankedCase, ResolutionStats, Status, Store, StoreError};

pub const DEFAULT_LIMIT: usize = 100;

// ---- errors ----

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad-request",
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            StoreError::Conflict { .. } => (StatusCode::CONFLICT, "conflict"),
            StoreError::Invalid(_) => (StatusCode::BAD_REQUEST, "bad-request"),
            StoreError::Db(_) | StoreError::Corrupt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "store failure");
        }
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(store: &Arc<Store>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
{
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

// ---- handlers ----

#[derive(Serialize, Deserialize)]
pub struct ProfileResponse {
    #[serde(flatten)]
    pub detail: ProfileDetail,
    pub rank: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_by: Option<String>,
    #[serde(default)]
    pub reopened_candidate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub pid: String,
    pub status: Status,
    pub curator: String,
}

fn parse_ranking_query(raw: Option<&str>) -> Result<(usize, Option<Status>), ApiError> {
    let mut limit = DEFAULT_LIMIT;
    let mut status = None;
    let pairs: Vec<(String, String)> = serde_urlencoded::from_str(raw.unwrap_or(""))
        .map_err(|e| ApiError::bad_request(format!("malformed query: {e}")))?;
    for (key, value) in pairs {
        match key.as_str() {
            "limit" => {
                limit = value
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("limit must be a positive integer, got {value:?}")))?;
                if limit == 0 {
                    return Err(ApiError::bad_request("limit must be at least 1"));
                }
            }
            "status" => status = Some(value.parse::<Status>()?),
            _ => {}
        }
    }
    Ok((limit, status))
}

async fn ranking(State(store): State<Arc<Store>>, RawQuery(query): RawQuery) -> ApiResult<Vec<RankedCase>> {
    let (limit, status) = parse_ranking_query(query.as_deref())?;
    Ok(Json(blocking(&store, move |s| s.top(limit, status)).await?))
}

async fn profile(State(store): State<Arc<Store>>, Path(pid): Path<String>) -> ApiResult<ProfileResponse> {
    let resp = blocking(&store, move |s| {
        let case = s.case(&pid)?;
        let detail = s.detail(&pid)?;
        Ok(ProfileResponse {
            detail,
            rank: case.rank,
            status: case.status,
            resolved_by: case.resolved_by,
            reopened_candidate: case.reopened_candidate,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn resolve(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult<RankedCase> {
    // parsed by hand so malformed bodies get the same error shape
    let req: ResolveRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid resolve body: {e}")))?;
    let case = blocking(&store, move |s| s.resolve(&req.pid, req.status, &req.curator)).await?;
    tracing::info!(pid = %case.pid, status = %case.status, "resolved");
    Ok(Json(case))
}

async fn stats(State(store): State<Arc<Store>>) -> ApiResult<ResolutionStats> {
    Ok(Json(blocking(&store, |s| s.stats()).await?))
}

async fn api_fallback() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not-found",
        message: "no such endpoint".into(),
    }
}

// ---- router ----

pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/ranking", get(ranking))
        .route("/profile/{pid}", get(profile))
        .route("/resolve", post(resolve))
        .route("/stats", get(stats))
        .fallback(api_fallback)
        .with_state(store);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app,
    }
}

pub async fn serve(store: Arc<Store>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(store, static_dir)).await
}
